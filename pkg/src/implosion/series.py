"""Taylor expansion of the profiles at the sonic origin.

Both profiles are analytic functions of ``x = y**(n-2)``::

    rho(y) = sum_M rhobar_M x**M,    omega(y) = sum_M omegabar_M x**M

and order ``M`` is fixed by the 2x2 linear system
``A_M (rhobar_M, omegabar_M)^T = (F_M, G_M)^T`` whose right-hand side only
involves coefficients of order below ``M``.  The pressure-like factor

    Qbar(x) = (2-gamma) alpha (1-alpha/2)^2 x rhobar^gamma (rhobar omegabar)^(n/3-1)

is expanded with Faà di Bruno's formula.

All convolutions are accumulated with :func:`math.fsum`, which returns the
correctly rounded sum of its inputs; the sources ``F_M`` and ``G_M`` involve
cancellation between terms that grow geometrically with ``M``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import OrderTooLowError, ResonanceError, SeriesDomainError
from .params import Params, resonant_gamma

DEFAULT_ORDER = 30

# gamma within this distance of 4/3 + 1/(2M) is treated as resonant at order M
RESONANCE_GAMMA_TOL = 1e-10
# relative determinant floor, |det A| < DET_RTOL * ||A||_F**2
DET_RTOL = 1e-12
# coefficients this small for this many consecutive orders end the table
UNDERFLOW_LEVEL = 1e-300
UNDERFLOW_RUN = 5


# ---------------------------------------------------------------------------
# truncated power-series arithmetic
# ---------------------------------------------------------------------------


def _check_lengths(seqs):
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise ValueError(f"coefficient sequences have different lengths {sorted(lengths)}")
    return lengths.pop()


def _conv_terms(seqs, M, exclude):
    """Yield the products s0[i0] * s1[i1] * ... with i0 + i1 + ... = M."""
    k = len(seqs)
    for head in itertools.product(range(M + 1), repeat=k - 1):
        last = M - sum(head)
        if last < 0:
            continue
        idx = head + (last,)
        if exclude and M in idx:
            continue
        if any(i >= len(s) for i, s in zip(idx, seqs)):
            continue
        prod = 1.0
        for i, s in zip(idx, seqs):
            prod *= s[i]
        yield prod


def conv_at(*seqs, M: int) -> float:
    """Order-``M`` coefficient of the product of the series ``seqs``.

    Indices past the end of a sequence count as zero coefficients.
    """
    return math.fsum(_conv_terms(seqs, M, exclude=False))


def round_product(*seqs) -> np.ndarray:
    """Cauchy product of two or three equal-length coefficient sequences.

    Returns the coefficients of the product through the common order.

    Examples
    --------
    >>> round_product([1.0, 2.0], [3.0, 4.0]).tolist()
    [3.0, 10.0]
    """
    if len(seqs) not in (2, 3):
        raise ValueError("round_product takes two or three sequences")
    length = _check_lengths(seqs)
    return np.array([conv_at(*seqs, M=m) for m in range(length)])


def square_product(*seqs, M: int) -> float:
    """Order-``M`` product coefficient with every term carrying an index M removed.

    These are the terms of the order-``M`` product that do not involve the
    unknown order-``M`` coefficients, so only orders ``0..M-1`` are read.
    """
    if M < 1:
        raise ValueError(f"square_product needs M >= 1, got {M}")
    if len(seqs) not in (2, 3):
        raise ValueError("square_product takes two or three sequences")
    short = [len(s) for s in seqs if len(s) < M]
    if short:
        raise ValueError(f"square_product at M = {M} needs coefficients 0..{M - 1}")
    return math.fsum(_conv_terms(seqs, M, exclude=True))


# ---------------------------------------------------------------------------
# Faà di Bruno
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def partitions(M: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Integer partitions of ``M`` as sparse multiplicity tuples.

    Each partition is a tuple of ``(k, lambda_k)`` pairs with
    ``sum(k * lambda_k) == M`` and ``lambda_k > 0``.
    """
    if M < 0:
        raise ValueError(f"partitions of a negative integer ({M})")
    if M == 0:
        return ((),)

    out = []

    def rec(remaining, largest, acc):
        if remaining == 0:
            out.append(tuple(acc))
            return
        for k in range(min(remaining, largest), 0, -1):
            for mult in range(remaining // k, 0, -1):
                acc.append((k, mult))
                rec(remaining - k * mult, k - 1, acc)
                acc.pop()

    rec(M, M, [])
    return tuple(out)


@lru_cache(maxsize=4096)
def _falling(e: float, j: int) -> float:
    """Falling factorial e (e-1) ... (e-j+1)."""
    val = 1.0
    for i in range(j):
        val *= e - i
    return val


def power_coeff(base, e: float, M: int) -> float:
    """Order-``M`` coefficient of ``(sum_k base[k] x**k) ** e``.

    Sums over partitions ``lambda`` of ``M``::

        e^(|lambda|) base_0^(e-|lambda|) prod_k base_k^lambda_k / lambda_k!

    where ``e^(j)`` is the falling factorial.
    """
    if M < 0:
        raise ValueError(f"coefficient order must be >= 0, got {M}")
    b0 = base[0]
    if M == 0:
        return b0**e
    if len(base) <= M:
        raise ValueError(f"power_coeff at M = {M} needs base coefficients 0..{M}")
    terms = []
    for lam in partitions(M):
        size = sum(mult for _, mult in lam)
        ff = _falling(e, size)
        if ff == 0.0:
            continue
        t = ff * b0 ** (e - size)
        for k, mult in lam:
            t *= base[k] ** mult / math.factorial(mult)
        terms.append(t)
    return math.fsum(terms)


def faa_di_bruno_P(rhobar, gamma: float, M: int) -> float:
    """Order-``M`` coefficient of ``rhobar(x) ** gamma``."""
    return power_coeff(rhobar, gamma, M)


def faa_di_bruno_W(rhobar, omegabar, n: int, M: int) -> float:
    """Order-``M`` coefficient of ``(rhobar(x) omegabar(x)) ** (n/3 - 1)``."""
    if M < 0:
        raise ValueError(f"coefficient order must be >= 0, got {M}")
    prod = [conv_at(rhobar, omegabar, M=m) for m in range(M + 1)]
    return power_coeff(prod, n / 3.0 - 1.0, M)


def q_coeff(params: Params, pbar, wbar, M: int) -> float:
    """Order-``M`` coefficient of Qbar from those of P and W below order M."""
    if M == 0:
        return 0.0
    return params.q_prefactor * math.fsum(pbar[i - 1] * wbar[M - i] for i in range(1, M + 1))


# ---------------------------------------------------------------------------
# the order-M linear system
# ---------------------------------------------------------------------------


def matrix_AM(params: Params, M: int, check: bool = True) -> tuple[np.ndarray, float]:
    """Coefficient matrix of the order-``M`` system and its determinant.

    Raises
    ------
    ResonanceError
        If gamma lies within 1e-10 of ``4/3 + 1/(2M)`` or the determinant is
        below ``1e-12 * ||A||_F**2``.
    """
    if M < 1:
        raise ValueError(f"matrix_AM needs M >= 1, got {M}")
    n, c1, e2 = params.n, params.c1, params.e2
    r0, w0 = params.rho0, params.omega0
    g29 = 2.0 / 9.0 * e2
    mw = M * (n - 2) * w0 * w0
    A = np.array(
        [
            [mw - g29, 4.0 * r0 * w0 + c1 * r0 - g29 * r0 / w0],
            [-g29 * w0 / r0, -mw + w0 * w0 + c1 * w0 - g29],
        ]
    )
    det = math.fsum([A[0, 0] * A[1, 1], -A[0, 1] * A[1, 0]])
    if check:
        g_res = resonant_gamma(M)
        near = abs(params.gamma - g_res) <= RESONANCE_GAMMA_TOL
        if near or abs(det) < DET_RTOL * float(np.sum(A * A)):
            raise ResonanceError(
                f"order-{M} coefficient matrix is singular: gamma = {params.gamma!r} is at "
                f"the resonance gamma = 4/3 + 1/(2M) = {g_res!r} with M = {M} "
                f"(det = {det:.3e})",
                M,
                g_res,
            )
    return A, det


@dataclass(frozen=True)
class SourcePair:
    f: float
    g: float


def source_terms(params: Params, rhobar, omegabar, qbar, M: int) -> SourcePair:
    """Right-hand side ``(F_M, G_M)`` of the order-``M`` system.

    Reads ``rhobar``/``omegabar`` through order ``M-1`` and ``qbar`` through
    order ``M``.
    """
    if M < 1:
        raise ValueError(f"source_terms needs M >= 1, got {M}")
    if len(rhobar) < M or len(omegabar) < M or len(qbar) < M + 1:
        raise ValueError(f"source_terms at M = {M} needs the table through order {M - 1}")
    r = list(rhobar[:M])
    w = list(omegabar[:M])
    Q = list(qbar[: M + 1])
    n, c1, e2, gamma, alpha = params.n, params.c1, params.e2, params.gamma, params.alpha
    g29 = 2.0 / 9.0 * e2 / (params.rho0 * params.omega0)
    K = (n - 2) * gamma / ((2.0 - gamma) * alpha)
    L3 = 3.0 * gamma / ((2.0 - gamma) * alpha)
    w2 = [conv_at(w, w, M=m) for m in range(M)]

    def sq(*s):
        return square_product(*s, M=M)

    # sum over i + j + k = M of (i+1) K a_{i+1} omegabar_{j-1} Qbar_k; j, k >= 1
    def drift(a):
        return math.fsum(
            (i + 1) * K * a[i + 1] * w[j - 1] * Q[M - i - j]
            for i in range(M - 1)
            for j in range(1, M - i)
        )

    def stretch(a):
        return math.fsum((i + 1) * (n - 2) * a[i + 1] * w2[M - i - 1] for i in range(M - 1))

    f = math.fsum(
        [
            -2.0 * sq(r, w, w),
            -c1 * sq(r, w),
            g29 * sq(r, r, w),
            drift(r),
            math.fsum(r[i] * Q[M - i] for i in range(M)),
            -stretch(r),
        ]
    )
    g = math.fsum(
        [
            -3.0 * params.omega0 * sq(w, w),
            sq(w, w, w),
            -c1 * sq(w, w),
            g29 * sq(r, w, w),
            -drift(w),
            math.fsum((w[i] - L3 * (w2[i] - w[0] * w[i])) * Q[M - i] for i in range(M)),
            stretch(w),
        ]
    )
    return SourcePair(f, g)


def first_order(params: Params) -> tuple[float, float]:
    """Closed-form order-one coefficients ``(rhobar_1, omegabar_1)``."""
    gamma, n = params.gamma, params.n
    scale = 3.0 * n * params.p0 / (2.0 * (gamma - 1.0) * (11.0 - 6.0 * gamma))
    return -(n + 1) * scale, (n - 2) * scale * params.omega0 / params.rho0


# ---------------------------------------------------------------------------
# the table
# ---------------------------------------------------------------------------


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CoeffTable:
    """Taylor coefficients in ``x = y**(n-2)`` through order ``order``."""

    params: Params
    rhobar: np.ndarray
    omegabar: np.ndarray
    qbar: np.ndarray
    pbar: np.ndarray
    wbar: np.ndarray

    @property
    def order(self) -> int:
        return len(self.rhobar) - 1

    @property
    def radius(self) -> float:
        return radius_estimate(self)

    def rows(self):
        """Yield ``(M, rhobar, omegabar, Qbar, Pbar, Wbar)`` for each order."""
        for m in range(self.order + 1):
            yield (m, self.rhobar[m], self.omegabar[m], self.qbar[m], self.pbar[m], self.wbar[m])


def build(params: Params, M_max: int = DEFAULT_ORDER) -> CoeffTable:
    """Solve the recurrence through order ``M_max``.

    Order one comes from its closed form. Every higher order is a 2x2
    solve, so a resonant gamma aborts with :class:`ResonanceError`.
    """
    if int(M_max) != M_max or M_max < 1:
        raise ValueError(f"M_max must be a positive integer, got {M_max!r}")
    M_max = int(M_max)
    gamma, n = params.gamma, params.n
    r = [params.rho0]
    w = [params.omega0]
    Q = [0.0]
    P = [faa_di_bruno_P(r, gamma, 0)]
    W = [faa_di_bruno_W(r, w, n, 0)]
    tiny_run = 0
    for M in range(1, M_max + 1):
        Q.append(q_coeff(params, P, W, M))
        if M == 1:
            rM, wM = first_order(params)
        else:
            A, _ = matrix_AM(params, M)
            src = source_terms(params, r, w, Q, M)
            rM, wM = np.linalg.solve(A, [src.f, src.g])
        r.append(float(rM))
        w.append(float(wM))
        P.append(faa_di_bruno_P(r, gamma, M))
        W.append(faa_di_bruno_W(r, w, n, M))
        if abs(rM) < UNDERFLOW_LEVEL and abs(wM) < UNDERFLOW_LEVEL:
            tiny_run += 1
            if tiny_run == UNDERFLOW_RUN:
                keep = M + 1 - UNDERFLOW_RUN
                r, w, Q, P, W = (s[:keep] for s in (r, w, Q, P, W))
                break
        else:
            tiny_run = 0
    return CoeffTable(params, _frozen(r), _frozen(w), _frozen(Q), _frozen(P), _frozen(W))


def radius_estimate(table: CoeffTable) -> float:
    """Root-test estimate of the convergence radius in ``y``.

    The growth rate ``C`` is the geometric mean of the root tests of both
    coefficient sequences over the upper half of the table; the radius in
    ``x`` is ``1/C`` and in ``y`` it is ``(1/C)**(1/(n-2))``.  Returns
    ``inf`` when every coefficient in that range vanishes.
    """
    if table.order < 10:
        raise OrderTooLowError(
            f"radius estimate needs a table of order >= 10, got {table.order}"
        )
    first = table.order // 2 + 1
    tail = [(m, c) for seq in (table.rhobar, table.omegabar) for m, c in enumerate(seq)
            if m >= first and c != 0.0]
    if not tail:
        return math.inf
    growth = math.exp(math.fsum(math.log(abs(c)) / m for m, c in tail) / len(tail))
    return (1.0 / growth) ** (1.0 / (table.params.n - 2))


@dataclass(frozen=True)
class SeriesValue:
    """Truncated series and derivatives at ``y`` with last-term tail sizes."""

    rho: np.ndarray | float
    omega: np.ndarray | float
    drho_dy: np.ndarray | float
    domega_dy: np.ndarray | float
    tail_rho: np.ndarray | float
    tail_omega: np.ndarray | float


def _horner(coeffs, x):
    acc = np.zeros_like(x) + coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * x + c
    return acc


def evaluate(table: CoeffTable, y, order: int | None = None, check_radius: bool = True) -> SeriesValue:
    """Evaluate the truncated series and its ``y``-derivatives.

    Parameters
    ----------
    table : CoeffTable
    y : float or array_like
        Similarity coordinate(s), ``y >= 0``.
    order : int, optional
        Truncation order, default the full table.
    check_radius : bool
        Refuse points at or beyond the estimated radius.

    Raises
    ------
    SeriesDomainError
        For negative ``y`` or ``y`` outside the estimated radius.
    """
    M = table.order if order is None else int(order)
    if not 0 <= M <= table.order:
        raise ValueError(f"order {order} outside 0..{table.order}")
    scalar = np.ndim(y) == 0
    yy = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(yy < 0) or not np.all(np.isfinite(yy)):
        raise SeriesDomainError("series evaluation needs finite y >= 0")
    if check_radius and table.order >= 10:
        nu = radius_estimate(table)
        if np.any(yy >= nu):
            raise SeriesDomainError(
                f"y = {float(yy.max())!r} is outside the estimated radius {nu!r} of the "
                f"order-{table.order} series; integrate the ODE from a hand-off point instead"
            )
    n = table.params.n
    x = yy ** (n - 2)
    rb = table.rhobar[: M + 1]
    wb = table.omegabar[: M + 1]
    rho = _horner(rb, x)
    omega = _horner(wb, x)
    if M >= 1:
        k = np.arange(1, M + 1)
        dx_dy = (n - 2) * yy ** (n - 3)
        drho = _horner(k * rb[1:], x) * dx_dy
        domega = _horner(k * wb[1:], x) * dx_dy
    else:
        drho = np.zeros_like(yy)
        domega = np.zeros_like(yy)
    tail_r = np.abs(rb[M]) * x**M if M else np.zeros_like(yy)
    tail_w = np.abs(wb[M]) * x**M if M else np.zeros_like(yy)
    out = (rho, omega, drho, domega, tail_r, tail_w)
    if scalar:
        out = tuple(float(v[0]) for v in out)
    return SeriesValue(*out)


def mass_integral(table: CoeffTable, y) -> np.ndarray | float:
    """Exact integral of the truncated series ``4 pi z**2 rho(z)`` over ``[0, y]``."""
    n = table.params.n
    yy = np.asarray(y, dtype=float)
    powers = 3.0 + np.arange(table.order + 1) * (n - 2)
    out = sum(4.0 * math.pi * c * yy**pw / pw for c, pw in zip(table.rhobar, powers))
    return float(out) if np.ndim(out) == 0 else out

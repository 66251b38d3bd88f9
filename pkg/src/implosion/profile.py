"""Right-hand side of the self-similar ODE and its outward integration.

In the similarity coordinate ``y`` the profiles solve::

    rho'   = rho (y h - q) / G
    omega' = (4 - 3 gamma + alpha - 3 omega) / y - omega (y h - q) / G

with the pressure closure ``p = rho**gamma (y**3 rho omega)**k``,
``k = (2-gamma) alpha / (4 - 3 gamma + alpha)`` (which equals ``n/3``), and::

    h = 2 omega**2 + c omega + c (2 - gamma) - 4 pi/(4-3gamma+alpha) (1-alpha/2)**2 rho omega
    q = (2-gamma) alpha (1-alpha/2)**2 p / (y rho omega)
    G = gamma (1-alpha/2)**2 p / rho - y**2 omega**2

where ``c = gamma - 1 - alpha/2``.  ``G`` vanishes only at the sonic origin;
the flow is supersonic (``G < 0``) for ``y > 0``.

Integration runs in ``s = ln y`` on ``(ln rho, omega)``: the explicit ``1/y``
terms become O(1) and the error control on ``ln rho`` is a relative control
on ``rho``, which decays by orders of magnitude over the domain.
"""

from __future__ import annotations

import enum
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import OrderTooLowError, SonicProximityError, ValidationError
from .params import Params, make_params
from .rk import DormandPrince, StepFailure
from .series import CoeffTable, build, evaluate, mass_integral, radius_estimate

SONIC_RTOL = 1e-14
SONIC_APPROACH = 1e-4
HANDOFF_MIN_FRACTION = 0.05
CSV_MAGIC = "# implosion-profiles v1"
CSV_COLUMNS = ("y", "rho", "omega", "u", "p", "G", "mass", "drho_dy", "domega_dy")


class Termination(str, enum.Enum):
    REACHED_YMAX = "reached_ymax"
    SONIC_HIT = "sonic_hit"
    RHO_FLOOR = "rho_floor"
    NONFINITE = "nonfinite"
    INVARIANT_VIOLATION = "invariant_violation"
    STEP_FAILURE = "step_failure"

    @property
    def success(self) -> bool:
        return self in (Termination.REACHED_YMAX, Termination.RHO_FLOOR)


@dataclass(frozen=True)
class ProfileState:
    y: float
    rho: float
    omega: float


@dataclass(frozen=True)
class AuxValues:
    p: np.ndarray | float
    h: np.ndarray | float
    q: np.ndarray | float
    G: np.ndarray | float
    u: np.ndarray | float
    mass: np.ndarray | float


def _unpack(state):
    if isinstance(state, ProfileState):
        return state.y, state.rho, state.omega
    y, rho, omega = state
    return y, rho, omega


def _aux_arrays(params: Params, y, rho, omega):
    gamma, alpha, e2, c1, w3 = params.gamma, params.alpha, params.e2, params.c1, params.three_omega0
    p = rho**gamma * (y**3 * rho * omega) ** params.p_exponent
    h = 2.0 * omega**2 + c1 * omega + c1 * (2.0 - gamma) - 4.0 * math.pi / w3 * e2 * rho * omega
    q = params.q_prefactor * p / (y * rho * omega)
    G = gamma * e2 * p / rho - (y * omega) ** 2
    u = 2.0 * y * (omega - (2.0 - gamma)) / (2.0 - alpha)
    mass = 4.0 * math.pi * y**3 * rho * omega / w3
    return p, h, q, G, u, mass


def aux(params: Params, state) -> AuxValues:
    """Pressure, ``h``, ``q``, ``G``, fluid velocity and enclosed mass.

    ``state`` is a :class:`ProfileState` or a ``(y, rho, omega)`` triple whose
    entries may be arrays.

    Raises
    ------
    ValidationError
        If any of ``y``, ``rho``, ``omega`` is not positive.
    """
    y, rho, omega = (np.asarray(v, dtype=float) for v in _unpack(state))
    if np.any(y <= 0) or np.any(rho <= 0) or np.any(omega <= 0):
        raise ValidationError("aux needs y > 0, rho > 0 and omega > 0", "state_positive")
    vals = _aux_arrays(params, y, rho, omega)
    if y.ndim == 0:
        vals = tuple(float(v) for v in vals)
    return AuxValues(*vals)


def rhs(params: Params, state):
    """``(drho/dy, domega/dy)`` at ``state``.

    Raises
    ------
    SonicProximityError
        If ``|G| < 1e-14 y**2 omega**2`` at any point.
    """
    y, rho, omega = (np.asarray(v, dtype=float) for v in _unpack(state))
    if np.any(y <= 0):
        raise ValidationError("rhs needs y > 0", "state_positive")
    p, h, q, G, _, _ = _aux_arrays(params, y, rho, omega)
    if np.any(np.abs(G) < SONIC_RTOL * (y * omega) ** 2):
        raise SonicProximityError(
            f"sonic denominator G is within {SONIC_RTOL:g} y^2 omega^2 of zero"
        )
    ratio = (y * h - q) / G
    drho = rho * ratio
    domega = (params.three_omega0 - 3.0 * omega) / y - omega * ratio
    if y.ndim == 0:
        return float(drho), float(domega)
    return drho, domega


# ---------------------------------------------------------------------------
# hand-off from the series
# ---------------------------------------------------------------------------


def _relative_tail(table: CoeffTable, y: float) -> float:
    v = evaluate(table, y, check_radius=False)
    return max(v.tail_rho / abs(v.rho), v.tail_omega / abs(v.omega))


def handoff(table: CoeffTable, rel_tol: float = 1e-10) -> tuple[float, ProfileState]:
    """Pick the point where the integrator takes over from the series.

    ``y0`` is the smaller of half the estimated radius and the largest ``y``
    at which the last retained term is at most ``rel_tol`` relative to the
    profile value.

    Raises
    ------
    OrderTooLowError
        If that ``y`` is below 5% of the radius, or the series state at
        ``y0`` is not supersonic.
    """
    if not rel_tol > 0:
        raise ValueError(f"rel_tol must be positive, got {rel_tol!r}")
    nu = radius_estimate(table)
    if not math.isfinite(nu):
        raise OrderTooLowError("series radius is infinite; cannot place a hand-off point")
    hi = 0.5 * nu
    if _relative_tail(table, hi) <= rel_tol:
        y0 = hi
    else:
        lo = 0.0
        # the tail grows like y**(M (n-2)), so bisection on it is well posed
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _relative_tail(table, mid) <= rel_tol:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-13 * hi:
                break
        y0 = lo
    if y0 < HANDOFF_MIN_FRACTION * nu:
        raise OrderTooLowError(
            f"series of order {table.order} meets rel_tol = {rel_tol:g} only for "
            f"y <= {y0:.3e}, below {HANDOFF_MIN_FRACTION:g} of the radius {nu:.3e}; "
            "raise the order or loosen rel_tol"
        )
    v = evaluate(table, y0)
    state = ProfileState(y0, v.rho, v.omega)
    if not aux(table.params, state).G < 0:
        raise OrderTooLowError(f"series state at y0 = {y0!r} is not supersonic (G >= 0)")
    return y0, state


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Controls:
    """Integrator settings.

    ``rtol`` is the per-step relative tolerance on ``rho`` and ``omega``;
    samples are laid out on a log-uniform grid with ``points_per_decade``
    points per decade in ``y``.
    """

    rtol: float = 1e-10
    points_per_decade: int = 64
    rho_floor: float = 1e-12
    stop_on_violation: bool = False

    def as_dict(self) -> dict:
        return {
            "rtol": self.rtol,
            "points_per_decade": self.points_per_decade,
            "rho_floor": self.rho_floor,
            "stop_on_violation": self.stop_on_violation,
        }


@dataclass(frozen=True)
class HandoffInfo:
    y0: float
    order: int | None
    radius: float | None


@dataclass(frozen=True, eq=False)
class ProfileResult:
    """Dense samples of an integrated profile and the way the run ended."""

    params: Params
    y: np.ndarray
    rho: np.ndarray
    omega: np.ndarray
    drho_dy: np.ndarray
    domega_dy: np.ndarray
    p: np.ndarray
    G: np.ndarray
    u: np.ndarray
    mass: np.ndarray
    termination: Termination
    handoff: HandoffInfo
    y_max: float
    table: CoeffTable | None = None
    note: str = ""
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)

    def state(self, i: int) -> ProfileState:
        return ProfileState(float(self.y[i]), float(self.rho[i]), float(self.omega[i]))


def _sonic_ratio(params: Params, y, rho, omega):
    *_, G, _, _ = _aux_arrays(params, y, rho, omega)
    return G / (y * omega) ** 2


def _bisect(fun, a: float, b: float, rtol: float = 1e-12) -> float:
    """Locate the sign change of ``fun`` on [a, b] in ``s``; fun(a) < 0 <= fun(b)."""
    while b - a > rtol:
        m = 0.5 * (a + b)
        if fun(m) < 0:
            a = m
        else:
            b = m
    return b


def integrate(
    params: Params,
    state0: ProfileState,
    y_max: float = 1e3,
    controls: Controls | None = None,
    table: CoeffTable | None = None,
) -> ProfileResult:
    """Integrate outward from ``state0`` to ``y_max``.

    Parameters
    ----------
    params : Params
    state0 : ProfileState
        Supersonic starting state, usually from :func:`handoff`.
    y_max : float
        End of the domain.
    controls : Controls, optional
    table : CoeffTable, optional
        The series the start state came from; recorded for hand-off
        metadata and for evaluating the profile inside ``y0``.

    Returns
    -------
    ProfileResult
        Samples on the log-uniform grid from ``y0`` up to ``y_max`` or the
        terminating event.
    """
    controls = controls or Controls()
    y0 = float(state0.y)
    if not (y0 > 0 and y_max > y0):
        raise ValueError(f"need 0 < y0 < y_max, got y0 = {y0!r}, y_max = {y_max!r}")
    if not aux(params, state0).G < 0:
        raise ValueError(f"starting state at y = {y0!r} is not supersonic (G >= 0)")

    def fun(s, z):
        y = math.exp(s)
        rho = math.exp(z[0])
        # trial stages may leave the physical region; the stepper rejects
        # the resulting non-finite values, so no warning is needed
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            drho, domega = rhs(params, (y, rho, z[1]))
        return (y * drho / rho, y * domega)

    s0, s1 = math.log(y0), math.log(y_max)
    n_int = max(1, math.ceil(controls.points_per_decade * math.log10(y_max / y0)))
    s_grid = np.linspace(s0, s1, n_int + 1)
    log_floor = math.log(controls.rho_floor)

    stepper = DormandPrince(
        fun,
        s0,
        [math.log(state0.rho), state0.omega],
        s1,
        rtol=np.array([0.0, controls.rtol]),
        atol=np.array([controls.rtol, 1e-4 * controls.rtol]),
    )

    s_out = [s0]
    z_out = [np.array([math.log(state0.rho), state0.omega])]
    k = 1
    termination = Termination.REACHED_YMAX
    note = ""
    while not stepper.done():
        try:
            step = stepper.step()
        except StepFailure as exc:
            # generic sonic points are square-root singularities: G tends to
            # zero with unbounded slope, so steps collapse before G changes
            # sign.  A collapse right next to G = 0 is reported as the sonic
            # event it is.
            y_f, z_f = math.exp(stepper.t), stepper.z
            ratio = _sonic_ratio(params, y_f, math.exp(z_f[0]), z_f[1])
            if ratio > -SONIC_APPROACH:
                termination = Termination.SONIC_HIT
                note = f"sonic_hit at y = {y_f!r} (G/(y omega)^2 = {ratio:.3e}, steps collapsed)"
            else:
                termination = Termination.STEP_FAILURE
                note = str(exc)
            if stepper.t > s_out[-1]:
                s_out.append(stepper.t)
                z_out.append(np.array(z_f))
            break

        def at(s, step=step):
            return step(np.array([s]))[:, 0]

        def sonic(s):
            z = at(s)
            return _sonic_ratio(params, math.exp(s), math.exp(z[0]), z[1]) + SONIC_RTOL

        def floor(s):
            return log_floor - at(s)[0]

        def nonfinite(s):
            return 0.0 if not np.all(np.isfinite(at(s))) else -1.0

        event_s = None
        for kind, test in (
            (Termination.NONFINITE, nonfinite),
            (Termination.SONIC_HIT, sonic),
            (Termination.RHO_FLOOR, floor),
        ):
            if test(step.t) >= 0:
                s_hit = _bisect(test, step.t_old, step.t, 1e-12 * max(1.0, abs(step.t)))
                if event_s is None or s_hit < event_s:
                    event_s, termination = s_hit, kind
        stop = event_s if event_s is not None else step.t
        while k < len(s_grid) and s_grid[k] <= stop:
            s_out.append(s_grid[k])
            z_out.append(at(s_grid[k]))
            k += 1
        if event_s is not None:
            if s_out[-1] < event_s:
                s_out.append(event_s)
                z_out.append(at(event_s))
            note = f"{termination.value} at y = {math.exp(event_s)!r}"
            break
        if controls.stop_on_violation:
            z = step.z
            if z[1] <= params.omega0 or fun(step.t, z)[0] >= 0:
                termination = Termination.INVARIANT_VIOLATION
                note = f"monotonicity bootstrap failed at y = {math.exp(step.t)!r}"
                break

    z_arr = np.array(z_out)
    y = np.exp(np.array(s_out))
    y[0] = y0
    if termination is Termination.REACHED_YMAX:
        y[-1] = y_max
    rho = np.exp(z_arr[:, 0])
    rho[0] = state0.rho
    omega = z_arr[:, 1]
    if termination is Termination.RHO_FLOOR:
        note = "rho dropped below rho_floor: " + note
    finite = np.isfinite(rho) & np.isfinite(omega)
    if not np.all(finite):
        termination = Termination.NONFINITE
        y, rho, omega = y[finite], rho[finite], omega[finite]
    try:
        drho, domega = rhs(params, (y, rho, omega))
    except SonicProximityError:
        drho = np.full_like(y, np.nan)
        domega = np.full_like(y, np.nan)
        # the final sample sits on the sonic event; the others are regular
        if len(y) > 1:
            drho[:-1], domega[:-1] = rhs(params, (y[:-1], rho[:-1], omega[:-1]))
    p, _, _, G, u, mass = _aux_arrays(params, y, rho, omega)
    radius = radius_estimate(table) if table is not None and table.order >= 10 else None
    return ProfileResult(
        params=params,
        y=y,
        rho=rho,
        omega=omega,
        drho_dy=drho,
        domega_dy=domega,
        p=p,
        G=G,
        u=u,
        mass=mass,
        termination=termination,
        handoff=HandoffInfo(y0, table.order if table is not None else None, radius),
        y_max=float(y_max),
        table=table,
        note=note,
        stats={"accepted": stepper.n_accepted, "rejected": stepper.n_rejected},
    )


def solve(gamma, n: int, order: int = 30, y_max: float = 1e3, rel_tol: float = 1e-10,
          controls: Controls | None = None) -> ProfileResult:
    """Series, hand-off and integration for one ``(gamma, n)``."""
    params = make_params(gamma, n)
    table = build(params, order)
    _, state = handoff(table, rel_tol)
    return integrate(params, state, y_max, controls, table=table)


# ---------------------------------------------------------------------------
# CSV exchange
# ---------------------------------------------------------------------------


def csv_header(params: Params) -> str:
    return f"{CSV_MAGIC} gamma={params.gamma!r} n={params.n} alpha={params.alpha!r}"


def write_csv(result: ProfileResult, dest) -> None:
    """Write the profile CSV to a path or text stream."""
    cols = np.column_stack(
        [result.y, result.rho, result.omega, result.u, result.p, result.G,
         result.mass, result.drho_dy, result.domega_dy]
    )
    buf = io.StringIO()
    buf.write(csv_header(result.params) + "\n")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in cols:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    text = buf.getvalue()
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    else:
        dest.write(text)


class ProfileFormatError(ValueError):
    pass


def read_csv(source) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a profile CSV into ``(header, columns)``.

    Raises
    ------
    ProfileFormatError
        On a missing or malformed header, wrong columns, ragged or
        non-numeric rows, or fewer than two samples.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            text = fh.read()
    else:
        text = source.read()
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith(CSV_MAGIC):
        raise ProfileFormatError("missing '# implosion-profiles v1' header line")
    header = {}
    for tok in lines[0][len(CSV_MAGIC):].split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise ProfileFormatError(f"malformed header token {tok!r}")
        header[key] = val
    try:
        header = {"gamma": float(header["gamma"]), "n": int(header["n"]),
                  "alpha": float(header["alpha"])}
    except (KeyError, ValueError) as exc:
        raise ProfileFormatError(f"header must carry gamma, n and alpha: {exc}") from exc
    if tuple(c.strip() for c in lines[1].split(",")) != CSV_COLUMNS:
        raise ProfileFormatError(f"expected columns {','.join(CSV_COLUMNS)}")
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ProfileFormatError(f"line {lineno}: expected {len(CSV_COLUMNS)} fields")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ProfileFormatError(f"line {lineno}: {exc}") from exc
    if len(rows) < 2:
        raise ProfileFormatError("profile needs at least two samples")
    data = np.array(rows)
    return header, {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}

"""Dormand-Prince 5(4) embedded Runge-Kutta stepper with PI step control and
quartic dense output.

The stepper works on any ``fun(t, z) -> dz/dt`` with ``z`` a 1-D float array.
``fun`` may raise :class:`ArithmeticError` (or return non-finite values) for
states it cannot evaluate; the trial step is then rejected and shrunk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth-order minus embedded fourth-order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: z(t + theta h) = z + h * K^T (P @ [theta, theta^2, theta^3, theta^4])
P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
BETA1 = 0.7 / 5.0
BETA2 = 0.4 / 5.0


@dataclass
class Step:
    """An accepted step from ``t_old`` to ``t`` with its dense interpolant."""

    t_old: float
    t: float
    z_old: np.ndarray
    z: np.ndarray
    K: np.ndarray

    def __call__(self, t):
        h = self.t - self.t_old
        theta = (np.asarray(t, dtype=float) - self.t_old) / h
        powers = np.stack([theta, theta**2, theta**3, theta**4])
        Q = self.K.T @ P
        return self.z_old[:, None] + h * (Q @ powers.reshape(4, -1))


class StepFailure(RuntimeError):
    pass


class DormandPrince:
    """Adaptive DOPRI5 integrator advancing one accepted step at a time.

    Parameters
    ----------
    fun : callable
        Right-hand side ``fun(t, z)``.
    t0, z0 : float, array_like
        Initial point.
    t_end : float
        Final time; the last step lands on it exactly.
    rtol, atol : float
        Mixed error tolerance per component.
    h_min_rel : float
        Smallest admissible step relative to ``max(1, |t|)``.
    """

    def __init__(self, fun, t0, z0, t_end, rtol=1e-10, atol=1e-14, h_min_rel=1e-14):
        self.fun = fun
        self.t = float(t0)
        self.z = np.array(z0, dtype=float)
        self.t_end = float(t_end)
        self.rtol = rtol
        self.atol = atol
        self.h_min_rel = h_min_rel
        self.f = self._eval(self.t, self.z)
        if self.f is None:
            raise StepFailure("right-hand side cannot be evaluated at the initial point")
        self.h = self._initial_step()
        self.err_prev = 1e-4
        self.n_accepted = 0
        self.n_rejected = 0

    def _eval(self, t, z):
        try:
            f = np.asarray(self.fun(t, z), dtype=float)
        except ArithmeticError:
            return None
        return f if np.all(np.isfinite(f)) else None

    def _scale(self, z1, z2):
        return self.atol + self.rtol * np.maximum(np.abs(z1), np.abs(z2))

    def _initial_step(self):
        # Hairer, Norsett & Wanner starting-step heuristic
        span = self.t_end - self.t
        sc = self._scale(self.z, self.z)
        d0 = np.sqrt(np.mean((self.z / sc) ** 2))
        d1 = np.sqrt(np.mean((self.f / sc) ** 2))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, span)
        f1 = self._eval(self.t + h0, self.z + h0 * self.f)
        if f1 is None:
            return h0 * 1e-3
        d2 = np.sqrt(np.mean(((f1 - self.f) / sc) ** 2)) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        return min(100 * h0, h1, span)

    def _attempt(self, h):
        t, z = self.t, self.z
        K = np.empty((7, z.size))
        K[0] = self.f
        for i in range(1, 7):
            zi = z + h * (np.asarray(A[i]) @ K[:i])
            fi = self._eval(t + C[i] * h, zi)
            if fi is None:
                return None
            K[i] = fi
        z_new = z + h * (B @ K)
        if not np.all(np.isfinite(z_new)):
            return None
        err = h * (E @ K)
        norm = float(np.sqrt(np.mean((err / self._scale(z, z_new)) ** 2)))
        return z_new, K, norm

    def done(self) -> bool:
        return self.t >= self.t_end

    def step(self) -> Step:
        """Take one accepted step, shrinking ``h`` until the error test passes."""
        while True:
            h = min(self.h, self.t_end - self.t)
            if h < self.h_min_rel * max(1.0, abs(self.t)):
                raise StepFailure(f"step size {h:.3e} underflowed at t = {self.t!r}")
            trial = self._attempt(h)
            if trial is None:
                self.n_rejected += 1
                self.h = 0.25 * h
                continue
            z_new, K, norm = trial
            if norm <= 1.0:
                if norm == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = SAFETY * norm**-BETA1 * self.err_prev**BETA2
                    factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
                self.err_prev = max(norm, 1e-4)
                t_new = self.t_end if h == self.t_end - self.t else self.t + h
                step = Step(self.t, t_new, self.z, z_new, K)
                self.t, self.z, self.f = t_new, z_new, K[6]
                self.h = h * factor
                self.n_accepted += 1
                return step
            self.n_rejected += 1
            self.h = h * max(MIN_FACTOR, SAFETY * norm**-0.2)

"""Physical-space fields reconstructed from a self-similar profile.

For ``t < 0`` the time-dependent solution is::

    rho~(t, r) = (-t)**(a1/b) rho(y),   u~ = (-t)**(a2/b) u(y),
    p~(t, r)   = (-t)**(a3/b) p(y),     y  = r / (-t)**(1/b)

and the mass inside radius ``r`` is ``(-t)**((a1+3)/b) M(y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ProfileRangeError, ValidationError
from .params import Params


@dataclass(frozen=True)
class FarField:
    """Exact power-law solution ``rho_f = rhobar_f y**e``, ``omega_f = 2 - gamma``."""

    rhobar_f: float
    rho_exponent: float
    p_amplitude: float
    p_exponent: float
    omega_f: float

    def rho(self, y):
        return self.rhobar_f * np.asarray(y, dtype=float) ** self.rho_exponent

    def drho_dy(self, y):
        y = np.asarray(y, dtype=float)
        return self.rho_exponent * self.rhobar_f * y ** (self.rho_exponent - 1.0)

    def p(self, y):
        return self.p_amplitude * np.asarray(y, dtype=float) ** self.p_exponent

    def state(self, y):
        """``(y, rho_f(y), omega_f)`` for use with ``profile.rhs``."""
        return y, self.rho(y), np.full_like(np.asarray(y, dtype=float), self.omega_f)


def far_field(params: Params) -> FarField:
    """The far-field solution of the profile equations.

    Raises
    ------
    ValidationError
        If ``gamma == alpha``, where the amplitude is undefined.
    """
    g, a = params.gamma, params.alpha
    if g == a:
        raise ValidationError("far field undefined for gamma = alpha", "gamma_ne_alpha")
    w3 = 4.0 - 3.0 * g + a
    kappa = 2.0 * math.pi * (2.0 - g) ** 2 / ((g - a) * w3)
    rhobar = kappa ** (-w3 / ((2.0 - g) * (4.0 - 3.0 * g))) * (2.0 - g) ** (a / (4.0 - 3.0 * g))
    return FarField(
        rhobar_f=rhobar,
        rho_exponent=(2.0 - a) / (g - 2.0),
        p_amplitude=kappa * rhobar**2,
        p_exponent=2.0 * (g - a) / (g - 2.0),
        omega_f=2.0 - g,
    )


def velocity(params: Params, y, omega):
    """Fluid velocity ``u = 2 y (omega - (2-gamma)) / (2 - alpha)``."""
    y = np.asarray(y, dtype=float)
    return 2.0 * y * (omega - (2.0 - params.gamma)) / (2.0 - params.alpha)


def mass(params: Params, y, rho, omega):
    """Enclosed self-similar mass ``4 pi y**3 rho omega / (4 - 3 gamma + alpha)``."""
    y = np.asarray(y, dtype=float)
    return 4.0 * math.pi * y**3 * rho * omega / params.three_omega0


@dataclass(frozen=True)
class PhysicalSample:
    t: np.ndarray | float
    r: np.ndarray | float
    y: np.ndarray | float
    rho_tilde: np.ndarray | float
    u_tilde: np.ndarray | float
    p_tilde: np.ndarray | float
    mass: np.ndarray | float


class ProfileInterpolant:
    """Evaluate ``(rho, omega)`` anywhere in ``[0, y_max]`` of a profile.

    Inside the first sample the series is summed directly; beyond it, a
    monotone cubic (PCHIP) interpolates ``ln rho`` and ``omega`` in ``ln y``.
    """

    def __init__(self, profile):
        self.profile = profile
        ly = np.log(profile.y)
        self._lrho = PchipInterpolator(ly, np.log(profile.rho))
        self._omega = PchipInterpolator(ly, profile.omega)
        self.y0 = float(profile.y[0])
        self.y_max = float(profile.y[-1])

    def __call__(self, y):
        from .series import evaluate

        y = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any(y < 0) or np.any(y > self.y_max):
            bad = float(y[y > self.y_max].max()) if np.any(y > self.y_max) else float(y.min())
            raise ProfileRangeError(
                f"y = {bad!r} lies outside the computed profile [0, {self.y_max!r}]; "
                f"re-run the integration with y_max >= {bad!r}"
            )
        rho = np.empty_like(y)
        omega = np.empty_like(y)
        inner = y < self.y0
        if np.any(inner):
            table = getattr(self.profile, "table", None)
            if table is None:
                raise ProfileRangeError(
                    f"y below the hand-off point {self.y0!r} needs the series table"
                )
            v = evaluate(table, y[inner])
            rho[inner], omega[inner] = v.rho, v.omega
        outer = ~inner
        if np.any(outer):
            ly = np.log(y[outer])
            rho[outer] = np.exp(self._lrho(ly))
            omega[outer] = self._omega(ly)
        return rho, omega


def physical_fields(params: Params, profile, t, r) -> PhysicalSample:
    """Physical density, velocity, pressure and mass at ``(t, r)``.

    Parameters
    ----------
    params : Params
    profile : ProfileResult
    t : float
        Time before collapse, ``t < 0``.
    r : float or array_like
        Radii, ``r >= 0``.

    Raises
    ------
    ProfileRangeError
        If ``y = r / (-t)**(1/b)`` exceeds the end of the profile.
    """
    t = float(t)
    if not t < 0:
        raise ValidationError(f"physical fields need t < 0, got {t!r}", "t_negative")
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise ValidationError("physical fields need r >= 0", "r_nonnegative")
    idx = params.indices
    tau = -t
    y = r / tau ** (1.0 / idx.b)
    rho, omega = ProfileInterpolant(profile)(y)
    p = rho**params.gamma * (y**3 * rho * omega) ** params.p_exponent
    out = PhysicalSample(
        t=np.full_like(y, t),
        r=r,
        y=y,
        rho_tilde=tau ** (idx.a1 / idx.b) * rho,
        u_tilde=tau ** (idx.a2 / idx.b) * velocity(params, y, omega),
        p_tilde=tau ** (idx.a3 / idx.b) * p,
        mass=tau ** ((idx.a1 + 3.0) / idx.b) * mass(params, y, rho, omega),
    )
    if scalar:
        out = PhysicalSample(*(float(v[0]) for v in (out.t, out.r, out.y, out.rho_tilde,
                                                         out.u_tilde, out.p_tilde, out.mass)))
    return out

"""Scaling algebra: exponents from (gamma, n), parameter bands, and the
boundary data at the sonic origin.

The free entropy-scaling index ``alpha`` is not shot for; smoothness at the
origin forces ``n = 3(2-gamma) alpha / (4 - 3 gamma + alpha)`` to be an even
integer >= 4, so ``alpha`` is obtained by inverting that relation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

from .errors import SingularBandError, ValidationError

GAMMA_MIN = 4.0 / 3.0
GAMMA_MAX = 2.0
FIRST_BAND = (19.0 / 12.0, 11.0 / 6.0)

# Float equality window for "exact" band endpoints; a fraction string such as
# "11/6" lands within one ulp of the endpoint.
_ENDPOINT_ATOL = 4.0 * math.ulp(2.0)


def parse_gamma(value) -> float:
    """Parse gamma given as a float, a decimal string, or a ``"p/q"`` string."""
    if isinstance(value, (float, int)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, Fraction):
        return float(value)
    text = str(value).strip()
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"cannot parse gamma from {value!r}", "gamma_format") from exc


def resonant_gamma(order: int) -> float:
    """gamma at which the order-``order`` recurrence matrix is singular."""
    return 4.0 / 3.0 + 1.0 / (2.0 * order)


def a_positivity_threshold(n: int) -> float:
    return (10.0 + n) / 9.0


@dataclass(frozen=True)
class GammaN:
    """Validated input pair: adiabatic exponent and regularity index."""

    gamma: float
    n: int

    def __post_init__(self):
        gamma, n = self.gamma, self.n
        if not math.isfinite(gamma):
            raise ValidationError(f"gamma must be finite, got {gamma!r}", "gamma_finite")
        if isinstance(n, bool) or int(n) != n:
            raise ValidationError(f"n must be an integer, got {n!r}", "n_integer")
        object.__setattr__(self, "n", int(n))
        if self.n % 2:
            raise ValidationError(
                f"n = {self.n} is odd: n must be even, the profiles are radial "
                "representations of smooth functions and admit an even extension",
                "n_even",
            )
        if self.n < 4:
            raise ValidationError(
                f"n = {self.n} is too small: a smooth profile needs n >= 4", "n_min"
            )
        if not gamma > GAMMA_MIN:
            raise ValidationError(
                f"gamma = {gamma!r} outside (4/3, 2): there is no smooth solution "
                "for gamma < 4/3 (smoothness at the sonic origin needs gamma > 4/3)",
                "gamma_range",
            )
        if not gamma < GAMMA_MAX:
            raise ValidationError(
                f"gamma = {gamma!r} outside (4/3, 2): the scaling exponent alpha "
                "degenerates at gamma = 2",
                "gamma_range",
            )

    @property
    def first_band(self) -> bool:
        lo, hi = FIRST_BAND
        return lo < self.gamma < hi

    @property
    def global_band(self) -> bool:
        return self.n in (4, 6) and self.gamma > max(
            FIRST_BAND[0], a_positivity_threshold(self.n)
        ) and self.gamma < FIRST_BAND[1]


@dataclass(frozen=True)
class ScalingIndices:
    alpha: float
    a1: float
    a2: float
    a3: float
    b: float


@dataclass(frozen=True)
class SonicData:
    rho0: float
    omega0: float
    p0: float
    m0: float


def _check_alpha_inputs(gamma: float, n: int) -> None:
    GammaN(gamma, n)
    if n == 3.0 * (2.0 - gamma):
        raise ValidationError("n = 3(2 - gamma): alpha is undefined", "n_denominator")


def derive_alpha(gamma: float, n: int) -> float:
    """Invert ``n(gamma, alpha) = 3(2-gamma) alpha / (4-3gamma+alpha)``.

    Raises
    ------
    ValidationError
        If gamma is outside (4/3, 2) or n is odd or below 4.
    """
    _check_alpha_inputs(gamma, n)
    alpha = n * (3.0 * gamma - 4.0) / (n - 3.0 * (2.0 - gamma))
    if not 3.0 * gamma - 4.0 < alpha < gamma:
        raise ValidationError(
            f"alpha = {alpha!r} violates 3*gamma - 4 < alpha < gamma", "alpha_constraints"
        )
    return alpha


def regularity_index(gamma: float, alpha: float) -> float:
    """Forward map ``n(gamma, alpha)``."""
    return 3.0 * (2.0 - gamma) * alpha / (4.0 - 3.0 * gamma + alpha)


def scaling_indices(gamma: float, alpha: float) -> ScalingIndices:
    if not 3.0 * gamma - 4.0 < alpha < gamma:
        raise ValidationError(
            f"alpha = {alpha!r} outside (3*gamma - 4, gamma)", "alpha_constraints"
        )
    two_m_g = 2.0 - gamma
    return ScalingIndices(
        alpha=alpha,
        a1=(alpha - 2.0) / two_m_g,
        a2=(2.0 * (1.0 - gamma) + alpha) / (2.0 * two_m_g),
        a3=2.0 * (alpha - gamma) / two_m_g,
        b=(2.0 - alpha) / (2.0 * two_m_g),
    )


def check_singular_endpoints(gamma: float, n: int) -> None:
    """Reject gamma exactly on 19/12, 11/6 or (10+n)/9."""
    edges = {
        "19/12": FIRST_BAND[0],
        "11/6": FIRST_BAND[1],
        f"(10+n)/9 = {10 + n}/9": a_positivity_threshold(n),
    }
    for label, edge in edges.items():
        if abs(gamma - edge) <= _ENDPOINT_ATOL:
            raise SingularBandError(
                f"gamma = {gamma!r} is the singular band endpoint {label}", "band_endpoint"
            )


def omega0_closed_form(gamma: float, n: int) -> float:
    """omega(0) written directly in (gamma, n), free of the alpha cancellation."""
    return (3.0 * gamma - 4.0) * (2.0 - gamma) / (n - 3.0 * (2.0 - gamma))


def sonic_data(gamma: float, n: int) -> SonicData:
    """Boundary values at the sonic origin y = 0.

    ``m0`` is the constant of the lower bootstrap bound; its denominator
    ``11 - 6 gamma`` vanishes at the upper edge of the first band.
    """
    GammaN(gamma, n)
    check_singular_endpoints(gamma, n)
    rho0 = 1.0 / (6.0 * math.pi)
    omega0 = omega0_closed_form(gamma, n)
    p0 = rho0**gamma * (rho0 * omega0) ** (n / 3.0)
    m0 = 3.0 * (n + 1) * n / (2.0 * (gamma - 1.0) * (11.0 - 6.0 * gamma)) * rho0 * omega0
    return SonicData(rho0=rho0, omega0=omega0, p0=p0, m0=m0)


@dataclass(frozen=True)
class Params:
    """(gamma, n) together with every quantity derived from it."""

    gn: GammaN
    indices: ScalingIndices
    sonic: SonicData

    @property
    def gamma(self) -> float:
        return self.gn.gamma

    @property
    def n(self) -> int:
        return self.gn.n

    @property
    def alpha(self) -> float:
        return self.indices.alpha

    @property
    def rho0(self) -> float:
        return self.sonic.rho0

    @property
    def omega0(self) -> float:
        return self.sonic.omega0

    @property
    def m0(self) -> float:
        return self.sonic.m0

    @property
    def p0(self) -> float:
        return self.sonic.p0

    @cached_property
    def three_omega0(self) -> float:
        """4 - 3 gamma + alpha."""
        return 4.0 - 3.0 * self.gamma + self.alpha

    @cached_property
    def c1(self) -> float:
        """gamma - 1 - alpha/2."""
        return self.gamma - 1.0 - 0.5 * self.alpha

    @cached_property
    def e2(self) -> float:
        """(1 - alpha/2)**2."""
        return (1.0 - 0.5 * self.alpha) ** 2

    @cached_property
    def q_prefactor(self) -> float:
        """(2 - gamma) alpha (1 - alpha/2)**2, the prefactor of q."""
        return (2.0 - self.gamma) * self.alpha * self.e2

    @cached_property
    def p_exponent(self) -> float:
        """Exponent of y^3 rho omega in the pressure closure; equals n/3."""
        return (2.0 - self.gamma) * self.alpha / self.three_omega0

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "n": self.n,
            "alpha": self.alpha,
            "a1": self.indices.a1,
            "a2": self.indices.a2,
            "a3": self.indices.a3,
            "b": self.indices.b,
            "rho0": self.rho0,
            "omega0": self.omega0,
            "p0": self.p0,
            "m0": self.m0,
            "first_band": self.gn.first_band,
            "global_band": self.gn.global_band,
        }


def make_params(gamma, n: int) -> Params:
    """Validate (gamma, n) and derive the scaling indices and sonic data."""
    g = parse_gamma(gamma)
    gn = GammaN(g, n)
    alpha = derive_alpha(gn.gamma, gn.n)
    return Params(gn=gn, indices=scaling_indices(gn.gamma, alpha), sonic=sonic_data(gn.gamma, gn.n))


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class Diagnostics:
    gamma: float
    n: int
    checks: tuple[Check, ...]
    degenerate_gammas: tuple[tuple[int, float], ...] = field(default=())
    nearest_resonance: tuple[int, float] | None = None

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "n": self.n,
            "checks": {c.name: {"passed": c.passed, "detail": c.detail} for c in self.checks},
            "degenerate_gammas": [list(d) for d in self.degenerate_gammas],
        }


def validate(gamma, n, order: int = 30) -> Diagnostics:
    """Report every parameter constraint without raising.

    ``degenerate_gammas`` lists the resonances 4/3 + 1/(2M) for M <= order.
    """
    try:
        g = parse_gamma(gamma)
    except ValidationError as exc:
        return Diagnostics(float("nan"), n, (Check("gamma_format", False, str(exc)),))

    checks = []
    n_int = isinstance(n, int) and not isinstance(n, bool)
    checks.append(Check("n_even_ge4", n_int and n % 2 == 0 and n >= 4, f"n = {n}"))
    checks.append(
        Check("gamma_range", GAMMA_MIN < g < GAMMA_MAX, f"gamma = {g!r} must lie in (4/3, 2)")
    )

    denom = n - 3.0 * (2.0 - g)
    alpha = n * (3.0 * g - 4.0) / denom if denom != 0 else float("nan")
    checks.append(
        Check(
            "alpha_constraints",
            bool(3.0 * g - 4.0 < alpha < g and g > GAMMA_MIN),
            f"alpha = {alpha!r} must lie in (3*gamma - 4, gamma) with gamma > 4/3",
        )
    )
    checks.append(
        Check(
            "mass_supercritical",
            bool(1.0 <= g < (4.0 + alpha) / 3.0),
            f"need 1 <= gamma < (4 + alpha)/3 = {(4.0 + alpha) / 3.0!r}",
        )
    )
    lo, hi = FIRST_BAND
    checks.append(Check("first_band", lo < g < hi, "gamma in (19/12, 11/6)"))
    thr = a_positivity_threshold(n) if n_int else float("nan")
    checks.append(
        Check("a_positivity", bool(g >= thr), f"gamma >= (10+n)/9 = {thr!r}")
    )
    checks.append(
        Check(
            "global_band",
            bool(n in (4, 6) and max(lo, thr) < g < hi),
            "n in {4, 6} and max(19/12, (10+n)/9) < gamma < 11/6",
        )
    )
    try:
        check_singular_endpoints(g, n)
        checks.append(Check("not_band_endpoint", True))
    except SingularBandError as exc:
        checks.append(Check("not_band_endpoint", False, str(exc)))

    degenerate = tuple((m, resonant_gamma(m)) for m in range(1, order + 1))
    nearest = min(degenerate, key=lambda d: abs(d[1] - g)) if degenerate else None
    resonant = [m for m, gm in degenerate if abs(gm - g) <= 1e-10]
    checks.append(
        Check(
            "non_resonant",
            not resonant,
            f"gamma = 4/3 + 1/(2M) at M = {resonant[0]}" if resonant else "",
        )
    )
    return Diagnostics(g, n, tuple(checks), degenerate, nearest)

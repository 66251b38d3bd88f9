"""Pointwise checks of the continuation argument along a computed profile.

With ``R = rho0 - rho`` and ``Omega = omega - omega0`` the bootstrap margins
are::

    b0   = -rho'                                  (density decreasing)
    b025 = rho                                    (density positive)
    b05  = omega - omega0
    b1   = y**2 omega R - m0 p / rho
    b3   = (n+1)/(n-2) rho0 Omega - omega0 R

and the identities below hold exactly along any solution of the ODE:

* ``d/dy b3 = -(rho'/rho + 3/y) b3
  + 3 omega0/((n-2) y) [-(y rho'/rho)(rho0 + 2(n-2)R/3) - (n-2) R]``
* ``d/dy b1`` expanded through the ODE and the pressure closure
* ``-y rho'/rho = -(y**2/G)(A Omega + B R + C Omega**2 + D R Omega + E)``

Every quantity is recomputed from ``(y, rho, omega)``; nothing cached by
the integrator is trusted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SonicProximityError
from .params import Params, make_params
from .physical import far_field
from .profile import Controls, ProfileResult, _aux_arrays, rhs
from .series import CoeffTable, build, mass_integral, radius_estimate

MARGINAL_RTOL = 1e-12
IDENTITY_TOL = 1e-10
MASS_TOL = 1e-6
ENTROPY_TOL = 1e-8
QUADRATIC_NODES = (0.0, 0.25, 0.5, 0.75, 1.0)
FLAG_NAMES = ("b0", "b025", "b05", "b1", "b3")


def _rel(diff, scale):
    scale = np.where(scale > 0, scale, 1.0)
    return np.abs(diff) / scale


# ---------------------------------------------------------------------------
# bootstrap flags
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapFlags:
    """Signed margins of the five bootstrap inequalities (arrays or floats)."""

    b0: np.ndarray
    b025: np.ndarray
    b05: np.ndarray
    b1: np.ndarray
    b3: np.ndarray
    scales: dict

    def margins(self) -> dict:
        return {name: getattr(self, name) for name in FLAG_NAMES}

    def holds(self) -> dict:
        return {name: np.asarray(getattr(self, name)) > 0 for name in FLAG_NAMES}

    def status(self, name: str) -> np.ndarray:
        """``"ok"``, ``"marginal"`` or ``"violated"`` per sample."""
        m = np.asarray(getattr(self, name))
        tol = MARGINAL_RTOL * np.asarray(self.scales[name])
        return np.where(m < -tol, "violated", np.where(np.abs(m) <= tol, "marginal", "ok"))


def bootstrap(params: Params, state, rhs_values) -> BootstrapFlags:
    """Evaluate the bootstrap margins at ``state = (y, rho, omega)``.

    ``rhs_values`` is ``(drho/dy, domega/dy)``.
    """
    y, rho, omega = (np.asarray(v, dtype=float) for v in state)
    drho = np.asarray(rhs_values[0], dtype=float)
    n, r0, w0, m0 = params.n, params.rho0, params.omega0, params.m0
    R = r0 - rho
    Om = omega - w0
    p = _aux_arrays(params, y, rho, omega)[0]
    k3 = (n + 1) / (n - 2)
    return BootstrapFlags(
        b0=-drho,
        b025=rho,
        b05=Om,
        b1=y**2 * omega * R - m0 * p / rho,
        b3=k3 * r0 * Om - w0 * R,
        scales={
            "b0": rho / y,
            "b025": np.full_like(rho, r0),
            "b05": np.full_like(rho, w0),
            "b1": y**2 * omega * r0 + m0 * p / rho,
            "b3": k3 * r0 * omega + w0 * r0,
        },
    )


# ---------------------------------------------------------------------------
# coefficients and identities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientBundle:
    A: float
    B: float
    C: float
    D: float
    E: np.ndarray | float
    g0_margin: float


def _one_minus_half_alpha(params: Params) -> float:
    """(1 - alpha/2) written through gamma and n."""
    g, n = params.gamma, params.n
    return 3.0 * (2.0 - g) * (n - 2) / (2.0 * (n - 3.0 * (2.0 - g)))


def coefficients(params: Params, state=None) -> CoefficientBundle:
    """Coefficients of the density-slope identity; ``E`` needs ``state``."""
    g, n = params.gamma, params.n
    r0, w0, m0 = params.rho0, params.omega0, params.m0
    den = n - 3.0 * (2.0 - g)
    k2 = _one_minus_half_alpha(params) ** 2
    A = 4.0 * w0 + (2.0 - g) * (n - 6.0 * (g - 1.0)) / (2.0 * den) - 4.0 * math.pi / (3.0 * w0) * k2 * r0
    B = 4.0 * math.pi / (3.0 * w0) * k2 * w0 - n * w0 / m0 * k2
    D = 4.0 * math.pi / (3.0 * w0) * k2
    g0_margin = 1.0 - 3.0 * (n - 2) ** 2 * g * (g - 1.0) * (11.0 - 6.0 * g) / (
        2.0 * n * (2 * n - 1) * (3.0 * g - 4.0) ** 2
    )
    E = float("nan")
    if state is not None:
        y, rho, omega = (np.asarray(v, dtype=float) for v in state)
        p = _aux_arrays(params, y, rho, omega)[0]
        E = k2 * n * w0 / (m0 * y**2 * omega) * (y**2 * omega * (r0 - rho) - m0 * p / rho)
    return CoefficientBundle(A=A, B=B, C=2.0, D=D, E=E, g0_margin=g0_margin)


@dataclass(frozen=True)
class IdentityResiduals:
    b3_rate: np.ndarray
    b1_rate: np.ndarray
    density_slope: np.ndarray
    ab_slack: np.ndarray

    def maxima(self) -> dict:
        return {
            "b3_rate": float(np.max(self.b3_rate)),
            "b1_rate": float(np.max(self.b1_rate)),
            "density_slope": float(np.max(self.density_slope)),
        }


def identity_residuals(params: Params, state, rhs_values) -> IdentityResiduals:
    """Relative residuals of the three exact identities, plus the A/B slack.

    Each left side is the derivative of a bootstrap margin built from the
    ODE right-hand side; each right side is the closed expression.  Residuals
    are normalised by the sum of the magnitudes of the contributing terms.
    """
    y, rho, omega = (np.asarray(v, dtype=float) for v in state)
    drho, domega = (np.asarray(v, dtype=float) for v in rhs_values)
    n, g = params.n, params.gamma
    r0, w0, m0 = params.rho0, params.omega0, params.m0
    R = r0 - rho
    Om = omega - w0
    lr = drho / rho
    k3 = (n + 1) / (n - 2)
    p = _aux_arrays(params, y, rho, omega)[0]
    G = g * params.e2 * p / rho - (y * omega) ** 2
    b3 = k3 * r0 * Om - w0 * R
    b1 = y**2 * omega * R - m0 * p / rho

    # rate of b3
    lhs_terms = [k3 * r0 * domega, w0 * drho]
    rhs_terms = [
        -(lr + 3.0 / y) * b3,
        3.0 * w0 / ((n - 2) * y) * (-y * lr * (r0 + 2.0 * (n - 2) * R / 3.0)),
        -3.0 * w0 / y * R,
    ]
    res_b3 = _rel(sum(lhs_terms) - sum(rhs_terms), sum(np.abs(t) for t in lhs_terms + rhs_terms))

    # rate of b1, left side from the pressure closure chain rule
    k = params.p_exponent
    dlog_p_over_rho = (g - 1.0) * lr + k * (3.0 / y + lr + domega / omega)
    lhs_terms = [
        2.0 * y * omega * R,
        y**2 * domega * R,
        -(y**2) * omega * drho,
        -m0 * p / rho * dlog_p_over_rho,
    ]
    flow = (3.0 * w0 - 3.0 * omega) / (y * omega)
    rhs_terms = [
        2.0 * y * omega * R,
        y**2 * omega * (flow - lr) * R,
        -(y**2) * rho * omega * lr,
        -m0 * ((g - 1.0) * lr + n / 3.0 * flow + n / y) * p / rho,
    ]
    res_b1 = _rel(sum(lhs_terms) - sum(rhs_terms), sum(np.abs(t) for t in lhs_terms + rhs_terms))

    # density slope
    cb = coefficients(params, (y, rho, omega))
    poly_terms = [cb.A * Om, cb.B * R, cb.C * Om**2, cb.D * R * Om, cb.E]
    lhs = -y * lr
    rhs_val = -(y**2) / G * sum(poly_terms)
    scale = np.abs(lhs) + np.abs(y**2 / G) * sum(np.abs(t) for t in poly_terms)
    res_slope = _rel(lhs - rhs_val, scale)

    slack = cb.A * Om + cb.B * R - (n - 2) * w0**2 / r0 * R
    return IdentityResiduals(res_b3, res_b1, res_slope, slack)


def entropy_residual(params: Params, state, rhs_values) -> np.ndarray:
    """Relative residual of ``p'/p - gamma rho'/rho - (2-gamma) alpha/(y omega)``.

    ``p'/p`` comes from differentiating the pressure closure.
    """
    y, rho, omega = (np.asarray(v, dtype=float) for v in state)
    drho, domega = (np.asarray(v, dtype=float) for v in rhs_values)
    g, k = params.gamma, params.p_exponent
    dlogp = g * drho / rho + k * (3.0 / y + drho / rho + domega / omega)
    source = (2.0 - g) * params.alpha / (y * omega)
    scale = (2.0 * np.abs(g * drho / rho) + np.abs(source)
             + k * (3.0 / y + np.abs(drho / rho) + np.abs(domega / omega)))
    return _rel(dlogp - g * drho / rho - source, scale)


def mass_quadrature(params: Params, y, rho, drho, table: CoeffTable | None = None) -> np.ndarray:
    """Cumulative ``int_0^y 4 pi z**2 rho dz`` on the sample grid.

    The part inside the first sample comes from integrating the series
    term by term (or, without a usable table, from the closed-form mass
    there).  Between samples the integrand ``4 pi y**3 rho`` is integrated
    in ``ln y`` by the trapezoid rule with endpoint-derivative correction,
    which is exact for cubics.
    """
    y = np.asarray(y, dtype=float)
    rho = np.asarray(rho, dtype=float)
    drho = np.asarray(drho, dtype=float)
    s = np.log(y)
    f = 4.0 * np.pi * y**3 * rho
    df = 4.0 * np.pi * (3.0 * y**3 * rho + y**4 * drho)
    h = np.diff(s)
    pieces = 0.5 * h * (f[1:] + f[:-1]) - h**2 / 12.0 * (df[1:] - df[:-1])
    if table is not None and table.order >= 10 and y[0] < radius_estimate(table):
        start = mass_integral(table, y[0])
    else:
        start = np.nan
    return start + np.concatenate([[0.0], np.cumsum(pieces)])


# ---------------------------------------------------------------------------
# supersonic margin, structure, asymptotics
# ---------------------------------------------------------------------------


def supersonic_margin(params: Params, y, rho, omega, delta: float | None = None) -> dict:
    """Empirical ``g0 = min (-G)/(y**2 omega)`` over ``y >= delta`` and ``max omega``.

    Also checks the lower bound on ``-G`` that follows from the bootstrap
    inequalities, at every sample where ``b1`` and ``b3`` hold.
    """
    y, rho, omega = (np.asarray(v, dtype=float) for v in (y, rho, omega))
    delta = float(y[0]) if delta is None else delta
    p = _aux_arrays(params, y, rho, omega)[0]
    G = params.gamma * params.e2 * p / rho - (y * omega) ** 2
    ratio = -G / (y**2 * omega)
    sel = y >= delta
    n, r0, w0, m0 = params.n, params.rho0, params.omega0, params.m0
    R = r0 - rho
    cb = coefficients(params)
    bound = (2 * n - 1) / (n + 1) * w0 / r0 * R * cb.g0_margin
    b1 = y**2 * omega * R - m0 * p / rho
    b3 = (n + 1) / (n - 2) * r0 * (omega - w0) - w0 * R
    applies = (b1 >= 0) & (b3 >= 0)
    ok = ratio >= bound * (1.0 - 1e-12)
    i_max = int(np.argmax(omega))
    g0 = float(np.min(ratio[sel])) if np.any(sel) else float("nan")
    return {
        "g0": g0,
        "g0_argmin_y": float(y[sel][np.argmin(ratio[sel])]) if np.any(sel) else None,
        "omega_upper": float(omega[i_max]),
        "omega_upper_y": float(y[i_max]),
        "omega_upper_interior": bool(0 < i_max < len(y) - 1),
        "lower_bound_holds": bool(np.all(ok[applies])),
        "lower_bound_min_slack": float(np.min((ratio - bound)[applies])) if np.any(applies) else None,
        "G_negative": bool(np.all(G < 0)),
        "delta": delta,
    }


def quadratic_bound(gamma: float, n: int, x):
    """``-gamma (n-2)**2/(n+1) x**2 + (n-2)(2n/3 - gamma) x + n``."""
    x = np.asarray(x, dtype=float)
    return -gamma * (n - 2) ** 2 / (n + 1) * x**2 + (n - 2) * (2.0 * n / 3.0 - gamma) * x + n


def q2(gamma: float, n: int) -> float:
    z = 3.0 * gamma - 4.0
    return ((gamma - 1.0) * (n - 2) - 2.0 * (n - 2) ** 2 / (n + 1) ** 2
            + (n - 2) ** 2 / (2.0 * z**2) + 4.0 * (n - 2) / (n + 1) - (n - 1))


def q3(gamma: float, n: int) -> float:
    z = 3.0 * gamma - 4.0
    return ((n - 2) ** 2 / (2.0 * z**2) + 4.0 * (n - 2) / (n + 1) - (n - 1)
            + (2.0 * (gamma - 1.0) - 1.0) * (n - 2) / (n + 1)
            + (gamma - 1.0) * (n - 2) ** 2 / (2.0 * z**2))


def S_poly(n: int, gamma: float) -> float:
    g = gamma
    return (6 * g * (g - 1) * (11 - 6 * g) - 3 * n * (12 * g**2 - 34 * g + 21)
            + n**2 * (36 * g**3 - 30 * g**2 - 132 * g + 133))


def T_poly(n: int, gamma: float) -> float:
    g = gamma
    return (12 * g * (g - 1) * (11 - 6 * g) - n * (144 * g**2 - 402 * g + 259)
            + n**2 * (72 * g**3 - 132 * g**2 - 66 * g + 133))


def structural_positivity(params: Params) -> dict:
    """Sign conditions on ``(gamma, n)`` alone used by the continuation argument."""
    g, n = params.gamma, params.n
    quad = [float(v) for v in quadratic_bound(g, n, QUADRATIC_NODES)]
    S, T = S_poly(n, g), T_poly(n, g)
    combo = 9 * n * (2 * n - 1) * S - 9 * n * (n + 1) * T
    vals = {"q2": q2(g, n), "q3": q3(g, n)}
    cb = coefficients(params)
    return {
        "quadratic": dict(zip([str(x) for x in QUADRATIC_NODES], quad)),
        "quadratic_ok": all(v >= 0 for v in quad),
        **vals,
        "q2_ok": vals["q2"] > 0,
        "q3_ok": vals["q3"] > 0,
        "S": S,
        "T": T,
        "b3_leading": combo,
        "b3_leading_ok": combo > 0,
        "A": cb.A,
        "A_nonnegative": cb.A >= 0,
        "g0_margin": cb.g0_margin,
    }


def asymptotics(params: Params, y, rho, omega) -> dict:
    """Decay diagnostics over the last decade of the profile.

    Raises
    ------
    ValueError
        If the profile stops before ``y = 100``.
    """
    y, rho, omega = (np.asarray(v, dtype=float) for v in (y, rho, omega))
    y_end = float(y[-1])
    if y_end < 100.0:
        raise ValueError(f"asymptotics need a profile reaching y >= 100, got y_max = {y_end!r}")
    sel = y >= y_end / 10.0
    ly = np.log(y[sel])
    slope = float(np.polyfit(ly, np.log(rho[sel]), 1)[0])
    w_slope = float(np.polyfit(ly, np.log(omega[sel]), 1)[0])
    ff = far_field(params)
    ratio = rho[sel] / ff.rho(y[sel])
    return {
        "rho_end_over_rho0": float(rho[-1] / params.rho0),
        "last_decade_slope": slope,
        "far_field_slope": ff.rho_exponent,
        "far_field_ratio_min": float(ratio.min()),
        "far_field_ratio_max": float(ratio.max()),
        "omega_last_decade_slope": w_slope,
        "rho_monotone_last_decade": bool(np.all(np.diff(rho[sel]) < 0)),
    }


# ---------------------------------------------------------------------------
# full report
# ---------------------------------------------------------------------------


def _flag_summary(y, flags: BootstrapFlags, skip_first: bool) -> dict:
    out = {}
    start = 1 if skip_first and len(y) > 1 else 0
    for name in FLAG_NAMES:
        m = np.asarray(getattr(flags, name))[start:]
        status = flags.status(name)[start:]
        i = int(np.argmin(m))
        out[name] = {
            "min_margin": float(m[i]),
            "argmin_y": float(y[start:][i]),
            "violated": int(np.sum(status == "violated")),
            "marginal": int(np.sum(status == "marginal")),
            "holds": bool(np.all(m > 0)),
        }
    return out


def verify_arrays(
    params: Params,
    y,
    rho,
    omega,
    table: CoeffTable | None = None,
    handoff: dict | None = None,
    termination: str | None = None,
    config: dict | None = None,
) -> dict:
    """Run every monitor check on samples ``(y, rho, omega)``.

    Returns the verification report as a JSON-ready dict with keys
    ``params``, ``handoff``, ``flags_summary``, ``identities``,
    ``supersonic``, ``structural``, ``asymptotics`` and ``verdict``.
    """
    y, rho, omega = (np.asarray(v, dtype=float) for v in (y, rho, omega))
    report = {
        "params": {**params.as_dict(), "config": config or {}},
        "handoff": handoff or {"y0": float(y[0])},
    }
    verdict = {}

    problems = []
    if len(y) < 2 or not np.all(np.diff(y) > 0):
        problems.append("samples are not strictly increasing in y")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(rho)) and np.all(np.isfinite(omega))):
        problems.append("non-finite samples")
    elif np.any(y <= 0) or np.any(rho <= 0) or np.any(omega <= 0):
        problems.append("non-positive y, rho or omega")
    if not problems:
        try:
            drho, domega = rhs(params, (y, rho, omega))
        except SonicProximityError as exc:
            problems.append(str(exc))
    if problems:
        report["verdict"] = {"samples_valid": False, "pass": False, "failures": problems}
        return report
    verdict["samples_valid"] = True
    state = (y, rho, omega)
    rv = (drho, domega)

    if termination is not None:
        verdict["termination"] = termination in ("reached_ymax", "rho_floor")

    flags = bootstrap(params, state, rv)
    report["flags_summary"] = _flag_summary(y, flags, skip_first=True)
    verdict["bootstrap"] = all(v["holds"] for v in report["flags_summary"].values())

    ids = identity_residuals(params, state, rv)
    ent = entropy_residual(params, state, rv)
    mass_q = mass_quadrature(params, y, rho, drho, table)
    mass_c = 4.0 * np.pi * y**3 * rho * omega / params.three_omega0
    mass_err = np.abs(mass_q - mass_c) / mass_c
    w0r0 = params.rho0 * params.omega0
    prod = w0r0 - rho * omega
    product_rate = rho * (3.0 * params.omega0 - 3.0 * omega) / y  # d(rho omega)/dy
    D = coefficients(params).D
    R = params.rho0 - rho
    Om = omega - params.omega0
    G = params.gamma * params.e2 * _aux_arrays(params, y, rho, omega)[0] / rho - (y * omega) ** 2
    slope_lhs = (-G / y**2) * (-y * drho / rho)
    slope_rhs = (params.n - 2) * params.omega0**2 / params.rho0 * R + 2.0 * Om**2 + D * R * Om
    i_mass = int(np.nanargmax(mass_err)) if np.any(np.isfinite(mass_err)) else 0
    report["identities"] = {
        **ids.maxima(),
        "ab_slack_min": float(np.min(ids.ab_slack[1:])) if len(y) > 1 else float(ids.ab_slack[0]),
        "entropy": float(np.max(ent)),
        "mass": float(np.nanmax(mass_err)) if np.any(np.isfinite(mass_err)) else float("nan"),
        "mass_argmax_y": float(y[i_mass]),
        "product_min": float(np.min(prod)),
        "product_max_rate": float(np.max(product_rate)),
        "slope_bound_min_slack": float(np.min((slope_lhs - slope_rhs)[1:])),
    }
    idm = report["identities"]
    for key in ("b3_rate", "b1_rate", "density_slope"):
        verdict[f"identity_{key}"] = bool(idm[key] <= IDENTITY_TOL)
    verdict["mass_identity"] = bool(idm["mass"] <= MASS_TOL)
    verdict["entropy_identity"] = bool(idm["entropy"] <= ENTROPY_TOL)
    verdict["product_monotone"] = bool(np.all(prod[1:] >= 0) and np.all(product_rate <= 0))

    sup = supersonic_margin(params, y, rho, omega)
    report["supersonic"] = sup
    verdict["supersonic"] = bool(sup["G_negative"] and sup["g0"] > 0 and math.isfinite(sup["omega_upper"]))

    struct = structural_positivity(params)
    report["structural"] = struct
    if params.gn.global_band:
        verdict["structural"] = bool(struct["quadratic_ok"] and struct["q2_ok"] and struct["q3_ok"])
        verdict["slope_bound"] = bool(idm["slope_bound_min_slack"] > 0)
        verdict["supersonic_lower_bound"] = sup["lower_bound_holds"]

    verdict["rho_monotone"] = bool(np.all(np.diff(rho) < 0))
    if y[-1] >= 100.0:
        report["asymptotics"] = asymptotics(params, y, rho, omega)
        verdict["decay"] = bool(report["asymptotics"]["last_decade_slope"] < 0)
    else:
        report["asymptotics"] = {"skipped": f"profile ends at y = {float(y[-1])!r} < 100"}

    failures = [k for k, v in verdict.items() if v is False]
    verdict["pass"] = not failures
    verdict["failures"] = failures
    report["verdict"] = verdict
    return report


def verify_profile(result: ProfileResult, config: dict | None = None) -> dict:
    """Verification report for an integrated profile."""
    handoff = {
        "y0": result.handoff.y0,
        "order": result.handoff.order,
        "radius": result.handoff.radius,
    }
    cfg = {"controls": Controls().as_dict(), **(config or {})}
    return verify_arrays(
        result.params,
        result.y,
        result.rho,
        result.omega,
        table=result.table,
        handoff=handoff,
        termination=result.termination.value,
        config=cfg,
    )


def verify_samples(gamma: float, n: int, y, rho, omega, order: int = 30, config=None) -> dict:
    """Report for stored samples; the series is rebuilt from ``(gamma, n)``."""
    params = make_params(gamma, n)
    table = build(params, order)
    handoff = {"y0": float(np.asarray(y)[0]), "order": order, "radius": radius_estimate(table)}
    return verify_arrays(params, y, rho, omega, table=table, handoff=handoff, config=config)

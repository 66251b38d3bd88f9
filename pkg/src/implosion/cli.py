"""Command-line interface: ``implosion {solve,coeffs,scan,verify,fields}``.

Exit codes: 0 success, 1 usage/configuration/parse error, 2 the computation
ran but a check failed (resonance, sonic hit, failed verification).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from types import SimpleNamespace

import numpy as np

from .errors import (
    ImplosionError,
    OrderTooLowError,
    ProfileRangeError,
    ResonanceError,
    SingularBandError,
    ValidationError,
)
from .monitor import bootstrap, verify_profile, verify_samples
from .params import GammaN, check_singular_endpoints, make_params, parse_gamma, resonant_gamma, validate
from .physical import physical_fields
from .profile import Controls, ProfileFormatError, handoff, integrate, read_csv, rhs, write_csv
from .series import RESONANCE_GAMMA_TOL, build

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


def _err(msg: str) -> None:
    print(f"implosion: {msg}", file=sys.stderr)


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def _check_inputs(gamma, n, order: int | None, force: bool, need_band: bool):
    """Validate in the order: hard constraints, resonances, band endpoints, band."""
    gn = GammaN(gamma, n)
    if order is not None:
        for M in range(2, order + 1):
            g_res = resonant_gamma(M)
            if abs(gn.gamma - g_res) <= RESONANCE_GAMMA_TOL:
                raise ResonanceError(
                    f"gamma = {gn.gamma!r} is the resonance gamma = 4/3 + 1/(2M) = {g_res!r} "
                    f"with M = {M}: the order-{M} recurrence matrix is singular",
                    M,
                    g_res,
                )
    check_singular_endpoints(gn.gamma, gn.n)
    if need_band and not gn.global_band and not force:
        raise ValidationError(
            f"(gamma, n) = ({gn.gamma!r}, {gn.n}) lies outside the band where global "
            "existence is established (n in {4, 6}, max(19/12, (10+n)/9) < gamma < 11/6); "
            "pass --force to integrate anyway",
            "global_band",
        )
    return gn


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    try:
        gamma = parse_gamma(args.gamma)
        _check_inputs(gamma, args.n, args.order, args.force, need_band=True)
        params = make_params(gamma, args.n)
        if not (args.order >= 10 and args.ymax > 0 and args.rel_tol > 0):
            raise ValidationError("need --order >= 10, --ymax > 0 and --rel-tol > 0")
    except ResonanceError as exc:
        _err(str(exc))
        return EXIT_FAIL
    except ValidationError as exc:
        _err(str(exc))
        return EXIT_USAGE
    try:
        table = build(params, args.order)
        y0, state = handoff(table, args.rel_tol)
    except ResonanceError as exc:
        _err(str(exc))
        return EXIT_FAIL
    except OrderTooLowError as exc:
        _err(str(exc))
        return EXIT_USAGE
    if args.ymax <= y0:
        _err(f"--ymax {args.ymax!r} must exceed the hand-off point y0 = {y0!r}")
        return EXIT_USAGE
    controls = Controls()
    result = integrate(params, state, args.ymax, controls, table=table)
    config = {
        "gamma": args.gamma,
        "n": args.n,
        "order": args.order,
        "ymax": args.ymax,
        "rel_tol": args.rel_tol,
        "force": args.force,
        "controls": controls.as_dict(),
    }
    report = verify_profile(result, config)
    report["handoff"]["rel_tol"] = args.rel_tol
    report["termination"] = {"value": result.termination.value, "note": result.note}
    try:
        write_csv(result, args.out)
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_USAGE
    verdict = report["verdict"]
    summary = (
        f"gamma={params.gamma!r} n={params.n} alpha={params.alpha!r} y0={y0:.6g} "
        f"termination={result.termination.value} samples={len(result)} "
        f"verdict={'pass' if verdict['pass'] else 'fail'}"
    )
    print(summary, file=sys.stderr)
    if not result.termination.success:
        _err(f"integration stopped early: {result.note}")
        return EXIT_FAIL
    if not verdict["pass"]:
        _err("failed checks: " + ", ".join(verdict["failures"]))
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------------------
# coeffs
# ---------------------------------------------------------------------------


def cmd_coeffs(args) -> int:
    try:
        gamma = parse_gamma(args.gamma)
        _check_inputs(gamma, args.n, args.order, force=True, need_band=False)
        if args.order < 1:
            raise ValidationError("--order must be >= 1")
        table = build(make_params(gamma, args.n), args.order)
    except ResonanceError as exc:
        _err(str(exc))
        return EXIT_FAIL
    except ValidationError as exc:
        _err(str(exc))
        return EXIT_USAGE
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["M", "rhobar", "omegabar", "Qbar", "Pbar", "Wbar"])
        for row in table.rows():
            w.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------

SCAN_COLUMNS = (
    "gamma", "n", "first_band", "global_band", "a_positive", "rhobar1_sign",
    "omegabar1_sign", "b1_lead_sign", "b3_lead_sign", "min_b0", "min_b025",
    "min_b05", "min_b1", "min_b3", "termination", "error",
)


def _sign(v: float) -> int:
    return int(np.sign(v))


def scan_point(gamma: float, n: int, order: int, ymax: float, force: bool) -> dict:
    """Diagnostics row for one grid point; failures land in ``error``."""
    row = dict.fromkeys(SCAN_COLUMNS, "")
    row["gamma"], row["n"] = gamma, n
    diag = validate(gamma, n, order)
    row["first_band"] = diag["first_band"].passed
    row["global_band"] = diag["global_band"].passed
    row["a_positive"] = diag["a_positivity"].passed
    if not diag["first_band"].passed and not force:
        row["error"] = "outside (19/12, 11/6); use --force"
        return row
    try:
        params = make_params(gamma, n)
        table = build(params, order)
        r0, w0 = params.rho0, params.omega0
        r1, w1, r2, w2 = table.rhobar[1], table.omegabar[1], table.rhobar[2], table.omegabar[2]
        k = 3.0 * (n + 1) * n / (2.0 * (gamma - 1.0) * (11.0 - 6.0 * gamma))
        b1_lead = -r2 + k**2 * (gamma + (n - 3) / (n + 1)) * params.p0**2 / r0
        b3_lead = (n + 1) / (n - 2) * r0 * w2 + w0 * r2
        row.update(rhobar1_sign=_sign(r1), omegabar1_sign=_sign(w1),
                   b1_lead_sign=_sign(b1_lead), b3_lead_sign=_sign(b3_lead))
        y0, state = handoff(table, 1e-10)
        if ymax <= y0:
            row["error"] = f"hand-off point {y0:.6g} beyond ymax"
            return row
        res = integrate(params, state, ymax, table=table)
        row["termination"] = res.termination.value
        if len(res) > 1:
            sl = slice(1, None)
            y, rho, om = res.y[sl], res.rho[sl], res.omega[sl]
            flags = bootstrap(params, (y, rho, om), rhs(params, (y, rho, om)))
            for name, m in flags.margins().items():
                row[f"min_{name}"] = float(np.min(m))
    except ImplosionError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _scan_worker(job):
    return scan_point(*job)


def _scan_workers(jobs: int) -> int:
    env = os.environ.get("IMPLOSION_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            pass
    return max(1, min(cap, jobs))


def cmd_scan(args) -> int:
    try:
        lo, hi = parse_gamma(args.gamma_min), parse_gamma(args.gamma_max)
        if not (4.0 / 3.0 < lo <= hi < 2.0):
            raise ValidationError(f"scan range [{lo!r}, {hi!r}] must lie inside (4/3, 2)")
        if args.steps < 1:
            raise ValidationError("--steps must be >= 1")
        GammaN(lo, args.n)
    except ValidationError as exc:
        _err(str(exc))
        return EXIT_USAGE
    grid = np.linspace(lo, hi, args.steps) if args.steps > 1 else np.array([lo])
    jobs = [(float(g), args.n, args.order, args.ymax, args.force) for g in grid]
    workers = _scan_workers(len(jobs))
    if workers == 1:
        rows = [_scan_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_worker, jobs))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in SCAN_COLUMNS])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _load_profile(path):
    with open(path) as fh:
        text = fh.read()
    if not text.endswith("\n"):
        raise ProfileFormatError("file does not end with a newline (truncated?)")
    from io import StringIO

    header, cols = read_csv(StringIO(text))
    try:
        params = make_params(header["gamma"], header["n"])
    except ValidationError as exc:
        raise ProfileFormatError(f"header parameters invalid: {exc}") from exc
    if not math.isclose(params.alpha, header["alpha"], rel_tol=1e-12):
        raise ProfileFormatError(
            f"header alpha {header['alpha']!r} disagrees with alpha(gamma, n) = {params.alpha!r}"
        )
    return params, cols


def cmd_verify(args) -> int:
    try:
        params, cols = _load_profile(args.profile)
    except (OSError, ProfileFormatError) as exc:
        _err(f"cannot read profile {args.profile}: {exc}")
        return EXIT_USAGE
    try:
        report = verify_samples(params.gamma, params.n, cols["y"], cols["rho"], cols["omega"],
                                order=args.order, config={"source": str(args.profile)})
    except ImplosionError as exc:
        _err(str(exc))
        return EXIT_FAIL
    text = json.dumps(report, indent=2)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    verdict = report["verdict"]
    if not verdict["pass"]:
        _err("verification failed: " + ", ".join(verdict["failures"]))
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


def cmd_fields(args) -> int:
    try:
        if args.profile:
            params, cols = _load_profile(args.profile)
            profile = SimpleNamespace(y=cols["y"], rho=cols["rho"], omega=cols["omega"],
                                      table=build(params, args.order))
        else:
            if args.gamma is None or args.n is None:
                raise ValidationError("give --profile FILE or both --gamma and --n")
            gamma = parse_gamma(args.gamma)
            _check_inputs(gamma, args.n, args.order, args.force, need_band=True)
            params = make_params(gamma, args.n)
            table = build(params, args.order)
            _, state = handoff(table, args.rel_tol)
            profile = integrate(params, state, args.ymax, table=table)
        sample = physical_fields(params, profile, args.t, np.asarray(args.r, dtype=float))
    except (OSError, ProfileFormatError, ValidationError, OrderTooLowError, ProfileRangeError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except ImplosionError as exc:
        _err(str(exc))
        return EXIT_FAIL
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t", "r", "y", "rho_tilde", "u_tilde", "p_tilde", "mass"])
    for i in range(len(sample.r)):
        # adding 0.0 folds -0.0 (the velocity at r = 0) into 0.0
        w.writerow([f"{float(getattr(sample, c)[i]) + 0.0:.17g}"
                    for c in ("t", "r", "y", "rho_tilde", "u_tilde", "p_tilde", "mass")])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="implosion",
        description="Self-similar supersonic implosion profiles: build, integrate, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, order_default=30):
        p.add_argument("--gamma", required=True, help="adiabatic exponent, decimal or p/q")
        p.add_argument("--n", type=int, required=True, help="even regularity index >= 4")
        p.add_argument("--order", type=int, default=order_default, help="series order M_max")

    p = sub.add_parser("solve", help="integrate a profile and write CSV + JSON report")
    common(p)
    p.add_argument("--ymax", type=float, default=1e3)
    p.add_argument("--rel-tol", type=float, default=1e-10)
    p.add_argument("--out", default="profile.csv")
    p.add_argument("--report", default="report.json")
    p.add_argument("--force", action="store_true", help="integrate outside the global band")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("coeffs", help="dump the Taylor coefficient table as CSV")
    common(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("scan", help="band diagnostics over a gamma grid")
    p.add_argument("--gamma-min", required=True)
    p.add_argument("--gamma-max", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--order", type=int, default=30)
    p.add_argument("--ymax", type=float, default=10.0)
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true", help="also integrate outside (19/12, 11/6)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("verify", help="re-run every check on a stored profile CSV")
    p.add_argument("profile")
    p.add_argument("--order", type=int, default=30)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fields", help="physical fields at time t and radii r")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--r", type=float, nargs="+", required=True)
    p.add_argument("--profile", default=None, help="profile CSV from 'solve'")
    p.add_argument("--gamma", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--order", type=int, default=30)
    p.add_argument("--ymax", type=float, default=1e3)
    p.add_argument("--rel-tol", type=float, default=1e-10)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_fields)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

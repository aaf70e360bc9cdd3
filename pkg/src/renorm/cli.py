"""Command-line front end: solve, scan, verify, asym.

Exit codes: 0 success, 1 usage or I/O, 2 infeasible parameters or regime
mismatch, 3 non-convergence, 4 verification failure.
"""
import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import (FeasibilityError, NonConvergenceError, RegimeError, RenormError, UsageError,
                     VerificationError)

SCAN_COLUMNS = ["p", "r", "nu", "lambda", "z1", "tau", "y0", "residual", "iterations", "bounds_pass", "status"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, stage="cli")


# ---------------------------------------------------------------- output

def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def to_json(obj):
    return json.dumps(_clean(obj), indent=2) + "\n"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else format(float(v), ".17g")
    return "" if v is None else str(v)


def to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e}", stage="io") from e


def _report_error(e):
    err = dict(error=type(e).__name__, message=str(e), stage=e.stage, exit_code=e.exit_code,
               payload=e.payload)
    sys.stderr.write(to_json(err))


# ---------------------------------------------------------------- shared

def _jobs(args):
    env = os.environ.get("RENORM_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise UsageError(f"RENORM_JOBS must be an integer, got {env!r}", stage="cli") from e
    return max(1, args.jobs)


def _use_N(s):
    return {"auto": None, "on": True, "off": False}[s]


def _solve(p, r, nu, tol, max_iter, damping, use_N, test_mode, lambda1=None):
    from .fixpoint import iterate
    from .renorm_ops import make_params
    from .verifier import feasibility

    if not test_mode:
        ok, margin = feasibility(p, r, nu)
        if not ok:
            raise FeasibilityError(f"no solutions for p={p}, r={r}, nu={nu}", stage="feasibility",
                                   payload={"margin": margin})
    params = make_params(p, r, nu, lambda1=lambda1, use_N=bool(use_N), test_mode=test_mode)
    return iterate(params, max_iter=max_iter, tol=tol, damping=damping, use_N=use_N)


def _check_config(args):
    if args.tol <= 0:
        raise UsageError("tol must be positive", stage="cli")
    if args.max_iter < 1:
        raise UsageError("max-iter must be at least 1", stage="cli")
    if not 0 < args.damping <= 1:
        raise UsageError("damping must lie in (0, 1]", stage="cli")


# ---------------------------------------------------------------- commands

def cmd_solve(args):
    _check_config(args)
    bundle, trace = _solve(args.p, args.r, args.nu, args.tol, args.max_iter, args.damping,
                           _use_N(args.use_N), args.test_affine, args.lambda1)
    out = bundle.to_dict()
    out["trace"] = trace.to_dict()
    if args.format == "csv":
        row = _row(args.p, args.r, args.nu, bundle, None)
        _emit(to_csv([row], SCAN_COLUMNS), args.output)
    else:
        _emit(to_json(out), args.output)
    return 0


def _row(p, r, nu, bundle, status):
    from .verifier import check_bounds

    row = dict(p=p, r=float(r), nu=float(nu), status=status or "ok")
    if bundle is not None:
        row.update({"lambda": bundle.lam, "z1": bundle.z1, "tau": bundle.tau, "y0": bundle.y0,
                    "residual": bundle.residual, "iterations": bundle.iterations,
                    "bounds_pass": check_bounds(bundle).passed})
    return row


def _scan_point(job):
    p, r, nu, tol, max_iter, damping, use_N, test_mode = job
    try:
        bundle, _ = _solve(p, r, nu, tol, max_iter, damping, use_N, test_mode)
        return _row(p, r, nu, bundle, "ok")
    except FeasibilityError:
        return _row(p, r, nu, None, "infeasible")
    except NonConvergenceError:
        return _row(p, r, nu, None, "nonconvergence")
    except RenormError as e:
        return _row(p, r, nu, None, f"failed:{type(e).__name__}")


def _float_list(s):
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"bad number list {s!r}", stage="cli") from e


def scan_grid(args):
    ps = [int(v) for v in _float_list(args.p)]
    nus = _float_list(args.nu)
    if args.r is not None:
        rs = _float_list(args.r)
    else:
        if args.r_steps < 1 or args.r_max < args.r_min or (args.r_steps > 1 and args.r_max == args.r_min):
            raise UsageError("degenerate r grid", stage="cli")
        rs = list(np.linspace(args.r_min, args.r_max, args.r_steps)) if args.r_steps > 1 else [args.r_min]
    grid = sorted({(p, float(nu), float(r)) for p in ps for nu in nus for r in rs})
    if not grid:
        raise UsageError("empty grid", stage="cli")
    return grid


def cmd_scan(args):
    _check_config(args)
    grid = scan_grid(args)
    jobs = [(p, r, nu, args.tol, args.max_iter, args.damping, _use_N(args.use_N), args.test_affine)
            for p, nu, r in grid]
    n = _jobs(args)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            rows = list(ex.map(_scan_point, jobs))
    else:
        rows = [_scan_point(j) for j in jobs]
    rows.sort(key=lambda row: (row["p"], row["nu"], row["r"]))
    if args.format == "json":
        _emit(to_json(rows), args.output)
    else:
        _emit(to_csv(rows, SCAN_COLUMNS), args.output)
    if args.figures:
        from .report import scan_figure
        scan_figure(rows, args.figures)
    failed = [row for row in rows if row["status"] not in ("ok", "infeasible")]
    return 3 if len(failed) == len(rows) else 0


def _load_bundle(path):
    from .fixpoint import SolutionBundle

    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read bundle {path}: {e}", stage="io") from e
    try:
        return SolutionBundle.from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"corrupt bundle {path}: {e}", stage="io") from e


def cmd_verify(args):
    from .verifier import BoundsReport, appendix_sweep, check_bounds, lanford_commutativity

    out = {}
    reports = []
    if args.bundle or args.p is not None:
        if args.bundle:
            bundle = _load_bundle(args.bundle)
        else:
            if args.r is None or args.nu is None:
                raise UsageError("verify needs --bundle or all of --p, --r, --nu", stage="cli")
            _check_config(args)
            bundle, _ = _solve(args.p, args.r, args.nu, args.tol, args.max_iter, args.damping,
                               _use_N(args.use_N), args.test_affine)
        rep = check_bounds(bundle, args.bound_tol)
        out["bounds"] = rep.to_dict()
        reports.append(rep)
        if bundle.params.nu == 2 and bundle.params.p >= 2 and not bundle.params.test_mode:
            lan = lanford_commutativity(bundle)
            out["lanford"] = lan.to_dict()
            reports.append(lan)
    elif not args.appendix:
        raise UsageError("verify needs --bundle, --p/--r/--nu or --appendix", stage="cli")
    if args.appendix:
        ok, mn, x = appendix_sweep(args.appendix_points)
        rep = BoundsReport(0.0)
        rep.ge("appendix_min", f"appendix inequality positive on {len(x)} points of (0, 1)", mn, 0.0,
               absolute=True)
        rep.entries[-1].passed = ok and mn > 0
        out["appendix"] = dict(passed=ok and mn > 0, min_margin=mn, points=len(x))
        reports.append(rep)
    passed = all(r.passed for r in reports)
    out["passed"] = passed
    _emit(to_json(out), args.output)
    if not passed:
        names = [e.name for r in reports for e in r.failures()]
        raise VerificationError(f"{len(names)} failing entries: {', '.join(names)}", stage="verify",
                                payload={"failures": names})
    return 0


def cmd_asym(args):
    from . import asymptotics as A

    _check_config(args)
    rs = _float_list(args.r)
    if not rs:
        raise UsageError("empty r list", stage="cli")
    if not (0 < args.nu <= 1 and args.p >= 2):
        raise RegimeError(f"asymptotics need 0 < nu <= 1 and p >= 2 (got p={args.p}, nu={args.nu})",
                          stage="asymptotics")
    out, abl, passed = [], [], True
    for r in sorted(rs):
        bundle, _ = _solve(args.p, r, args.nu, args.tol, args.max_iter, args.damping, None, False)
        ab = A.build(bundle)
        rep, inv = A.check_bounds(ab, args.bound_tol), A.invariants(ab, args.bound_tol)
        lim = A.limit_residual(ab)
        ok = rep.passed and inv.passed and lim <= 10 * bundle.residual
        passed &= ok
        out.append(dict(summary=ab.summary(), residual=bundle.residual, limit_residual=lim,
                        bounds=rep.to_dict(), invariants=inv.to_dict(), passed=ok))
        abl.append(ab)
    res = dict(points=out)
    if len(abl) > 1:
        diffs = A.family_differences(abl)
        dec = all(b[k] < a[k] for a, b in zip(diffs[:-1], diffs[1:]) for k in ("plus", "minus"))
        res["family"] = dict(differences=diffs, decreasing=dec)
        passed &= dec
    res["passed"] = passed
    _emit(to_json(res), args.output)
    if args.figures:
        from .report import asym_figure
        asym_figure(abl, args.figures)
    if not passed:
        raise VerificationError("asymptotic checks failed", stage="asym")
    return 0


# ---------------------------------------------------------------- parser

def build_parser():
    ap = _Parser(prog="renorm", description="Fixed points of the (p+1)-tupling renormalization operator.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, point=True):
        if point:
            sp.add_argument("--p", type=int, required=True)
            sp.add_argument("--r", type=float, required=True)
            sp.add_argument("--nu", type=float, required=True)
        sp.add_argument("--tol", type=float, default=1e-12)
        sp.add_argument("--max-iter", type=int, default=500)
        sp.add_argument("--damping", type=float, default=1.0)
        sp.add_argument("--use-N", choices=["auto", "on", "off"], default="auto")
        sp.add_argument("--test-affine", action="store_true", help="allow r = 1, nu > 1 (affine test mode)")
        sp.add_argument("--output", "-o", default=None)

    sp = sub.add_parser("solve", help="solve one parameter point")
    common(sp)
    sp.add_argument("--lambda1", type=float, default=None)
    sp.add_argument("--format", choices=["json", "csv"], default="json")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("scan", help="solve a grid of parameter points")
    common(sp, point=False)
    sp.add_argument("--p", default="1")
    sp.add_argument("--nu", default="1")
    sp.add_argument("--r", default=None, help="comma-separated r values")
    sp.add_argument("--r-min", type=float, default=2.0)
    sp.add_argument("--r-max", type=float, default=2.0)
    sp.add_argument("--r-steps", type=int, default=1)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--format", choices=["json", "csv"], default="csv")
    sp.add_argument("--figures", default=None, help="also write a PNG of lambda against r")
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("verify", help="run the bound suite on a bundle")
    common(sp, point=False)
    sp.add_argument("--bundle", default=None)
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--r", type=float, default=None)
    sp.add_argument("--nu", type=float, default=None)
    sp.add_argument("--bound-tol", type=float, default=1e-9)
    sp.add_argument("--appendix", action="store_true")
    sp.add_argument("--appendix-points", type=int, default=10_000)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("asym", help="large-r diagnostics for 0 < nu <= 1, p >= 2")
    common(sp, point=False)
    sp.add_argument("--p", type=int, default=2)
    sp.add_argument("--nu", type=float, default=1.0)
    sp.add_argument("--r", default="10", help="comma-separated r values")
    sp.add_argument("--bound-tol", type=float, default=1e-9)
    sp.add_argument("--figures", default=None, help="also write a PNG of S_pm across the family")
    sp.set_defaults(func=cmd_asym)
    return ap


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: solve, scan, verify or asym", stage="cli")
        return args.func(args)
    except RenormError as e:
        _report_error(e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

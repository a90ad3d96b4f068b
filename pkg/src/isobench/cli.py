"""Command-line surface binding the toolkit into reproducible batch runs.

Every subcommand validates its inputs fully before writing anything, puts a
one-line JSON result summary on stdout, and exits 0 on success, 1 on a usage
error, 2 on a numerical failure.  All randomness is seeded explicitly; the
only nondeterministic outputs are the wall-clock columns, which golden
comparisons exclude.
"""

import argparse
import io
import json
import math
import os
import re
import sys

import numpy as np

from .bench import (
    OracleGateError,
    build_reference,
    compare_suite,
    default_budget_ladder,
    isochrone,
    wide_variant,
    write_isochrone_csv,
    write_summary_json,
)
from .fileio import (
    FileFormatError,
    load_operator,
    load_vector,
    save_operator,
    save_vector,
)
from .homotopy import (
    PathDegenerateError,
    PathLimits,
    complexity_slope,
    eval_path,
    homotopy_solve,
    path_complexity,
    write_path_csv,
)
from .operators import (
    SpectrumSpec,
    duplicate_columns,
    gen_gaussian,
    normalize_spectral,
    replace_spectrum,
    singular_values,
    spectral_norm,
    surrogate_spectrum,
)
from .prox import Problem, lambda_max
from .solvers import ALGORITHMS, StepFailure, make_solver, run_budgeted, write_trace_csv
from .warmstart import (
    arithmetic_schedule,
    apsd_run,
    fpc_run,
    geometric_schedule,
    write_warmstart_csv,
)

__all__ = ["main"]

PAPER_M, PAPER_P = 1848, 8192


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit."""

    def error(self, message):
        raise UsageError(message)


def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} file not found: {path}")
    return path


def _write_text(path, text):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _parse_budgets(spec, lo, hi):
    m = re.fullmatch(r"log(\d+)", spec)
    if m:
        return default_budget_ladder(lo, hi, int(m.group(1)))
    try:
        budgets = [int(tok) for tok in spec.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad budget list {spec!r}") from exc
    if not budgets or any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise UsageError("budgets must be strictly increasing")
    return budgets


def _workers(args):
    if args.workers is not None:
        return args.workers
    env = os.environ.get("ISOBENCH_WORKERS")
    return int(env) if env else 1


def _limits(args):
    return PathLimits(
        max_breakpoints=args.max_breakpoints,
        max_support=args.max_support,
        min_lambda=args.min_lambda,
        kkt_tol=args.kkt_tol,
    )


def _add_limit_flags(sub):
    sub.add_argument("--max-breakpoints", type=int, default=100_000)
    sub.add_argument("--max-support", type=int, default=100_000)
    sub.add_argument("--min-lambda", type=float, default=0.0)
    sub.add_argument("--kkt-tol", type=float, default=1e-9)


def _load_instance(args):
    op = load_operator(_require_file(args.op, "operator"))
    y = load_vector(_require_file(args.data, "data"))
    if y.shape != (op.m,):
        raise UsageError(f"data length {y.size} does not match operator rows {op.m}")
    return op, y


def _build_parser():
    parser = _Parser(prog="isobench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-operator", help="generate and save a test operator")
    g.add_argument("--kind", choices=("gaussian", "repeated", "illcond"), required=True)
    g.add_argument("--m", type=int, default=200)
    g.add_argument("--p", type=int, default=1000)
    g.add_argument("--paper-dims", action="store_true",
                   help=f"use the {PAPER_M}x{PAPER_P} size")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--normalize", type=float, default=0.999)
    g.add_argument("--no-normalize", action="store_true")
    g.add_argument("--dup-col", type=int, default=None,
                   help="first repeated column (repeated kind; default p//2)")
    g.add_argument("--dup-eps", type=float, default=None,
                   help="perturbation size (repeated kind; default 1e-3*||K||_F/sqrt(mp))")
    g.add_argument("--decades", type=float, default=8.0,
                   help="dynamic range of the surrogate spectrum (illcond kind)")
    g.add_argument("--out", required=True)

    d = sub.add_parser("gen-data", help="synthesize y = K x_input + noise")
    d.add_argument("--op", required=True)
    d.add_argument("--seed", type=int, required=True)
    d.add_argument("--support", type=int, default=10)
    d.add_argument("--noise", type=float, default=0.0)
    d.add_argument("--out", required=True)
    d.add_argument("--dump-input", default=None,
                   help="also save the sparse input vector (not a minimizer)")

    lm = sub.add_parser("lambda-max", help="print max_i |(K^T y)_i|")
    lm.add_argument("--op", required=True)
    lm.add_argument("--data", required=True)

    pa = sub.add_parser("path", help="trace the exact solution path")
    pa.add_argument("--op", required=True)
    pa.add_argument("--data", required=True)
    stop = pa.add_mutually_exclusive_group(required=True)
    stop.add_argument("--stop-exp", type=float, help="stop at lambda_max/2^EXP")
    stop.add_argument("--lambda-stop", type=float)
    stop.add_argument("--rho-stop", type=float)
    _add_limit_flags(pa)
    pa.add_argument("--out", required=True)
    pa.add_argument("--dump-iterates", default=None,
                    help="directory for per-breakpoint iterate vectors")

    so = sub.add_parser("solve", help="run one iterative algorithm with budgets")
    so.add_argument("--algo", choices=ALGORITHMS, required=True)
    so.add_argument("--op", required=True)
    so.add_argument("--data", required=True)
    target = so.add_mutually_exclusive_group(required=True)
    target.add_argument("--exp", type=float, help="penalty lambda_max/2^EXP")
    target.add_argument("--lambda", dest="lam", type=float)
    target.add_argument("--rho", type=float, help="l1 radius (psd only)")
    so.add_argument("--budgets", default="log10")
    so.add_argument("--budget-min", type=int, default=10)
    so.add_argument("--budget-max", type=int, default=100_000)
    so.add_argument("--no-reference", action="store_true",
                    help="skip the exact-path reference (no error column)")
    _add_limit_flags(so)
    so.add_argument("--out", required=True)

    iso = sub.add_parser("isochrone", help="error grid for one algorithm")
    iso.add_argument("--algo", choices=ALGORITHMS, required=True)
    _add_grid_flags(iso)

    co = sub.add_parser("compare", help="isochrone grids for several algorithms")
    co.add_argument("--algos", required=True, help="comma-separated algorithm list")
    _add_grid_flags(co)
    co.add_argument("--summary", default=None, help="write per-algo summary JSON here")

    wa = sub.add_parser("warmstart", help="continuation run over a schedule")
    wa.add_argument("--method", choices=("fpc", "apsd"), required=True)
    wa.add_argument("--op", required=True)
    wa.add_argument("--data", required=True)
    wa.add_argument("--n-steps", type=int, required=True)
    wstop = wa.add_mutually_exclusive_group(required=True)
    wstop.add_argument("--stop-exp", type=float,
                       help="terminal penalty lambda_max/2^EXP")
    wstop.add_argument("--rho-stop", type=float, help="terminal radius (apsd)")
    wa.add_argument("--no-reference", action="store_true")
    _add_limit_flags(wa)
    wa.add_argument("--out", required=True)

    cx = sub.add_parser("complexity", help="cumulative path cost per breakpoint")
    cx.add_argument("--op", required=True)
    cx.add_argument("--data", required=True)
    cx.add_argument("--stop-exp", type=float, default=14.0)
    cx.add_argument("--fit-min", type=int, default=50)
    cx.add_argument("--fit-max", type=int, default=400)
    _add_limit_flags(cx)
    cx.add_argument("--out", required=True)

    return parser


def _add_grid_flags(sub):
    sub.add_argument("--op", required=True)
    sub.add_argument("--data", required=True)
    sub.add_argument("--kmin", type=float, default=0.0)
    sub.add_argument("--kmax", type=float, default=14.0)
    sub.add_argument("--kstep", type=float, default=1.0)
    sub.add_argument("--budgets", default="log10")
    sub.add_argument("--budget-min", type=int, default=10)
    sub.add_argument("--budget-max", type=int, default=100_000)
    sub.add_argument("--workers", type=int, default=None,
                     help="cell fan-out threads (default ISOBENCH_WORKERS or 1)")
    _add_limit_flags(sub)
    sub.add_argument("--out", required=True)


def _grid_exponents(args):
    if args.kmax < args.kmin or args.kstep <= 0:
        raise UsageError("need kmin <= kmax and kstep > 0")
    n = int(math.floor((args.kmax - args.kmin) / args.kstep + 1e-9)) + 1
    return args.kmin + args.kstep * np.arange(n)


def _cmd_gen_operator(args):
    m, p = (PAPER_M, PAPER_P) if args.paper_dims else (args.m, args.p)
    if m < 1 or p < 1:
        raise UsageError("m and p must be >= 1")
    target = None if args.no_normalize else args.normalize
    if target is not None and target <= 0:
        raise UsageError("--normalize must be positive")
    base = gen_gaussian(m, p, args.seed)
    if args.kind == "gaussian":
        op = base if target is None else normalize_spectral(base, target)
    elif args.kind == "repeated":
        ref = base if target is None else normalize_spectral(base, target)
        j0 = args.dup_col if args.dup_col is not None else p // 2
        if not 0 <= j0 < p:
            raise UsageError(f"--dup-col {j0} out of range for p={p}")
        perturbed = duplicate_columns(ref, j0, eps=args.dup_eps, seed=args.seed + 1)
        op = replace_spectrum(perturbed, singular_values(ref))
    else:  # illcond: gaussian singular vectors, log-decay spectrum
        top = target if target is not None else spectral_norm(base)
        spec = SpectrumSpec("surrogate-illcond", min(m, p), args.decades, top)
        op = replace_spectrum(base, surrogate_spectrum(spec))
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_operator(op, args.out)
    return {"status": "ok", "command": "gen-operator", "out": args.out,
            "m": op.m, "p": op.p, "sigma1": spectral_norm(op)}


def _cmd_gen_data(args):
    op = load_operator(_require_file(args.op, "operator"))
    if not 1 <= args.support <= op.p:
        raise UsageError(f"--support must be in [1, {op.p}]")
    if args.noise < 0:
        raise UsageError("--noise must be >= 0")
    rng = np.random.Generator(np.random.PCG64(args.seed))
    x_input = np.zeros(op.p)
    idx = rng.choice(op.p, size=args.support, replace=False)
    x_input[idx] = rng.standard_normal(args.support)
    y = op.entries @ x_input
    if args.noise > 0:
        y = y + args.noise * rng.standard_normal(op.m)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_vector(y, args.out)
    if args.dump_input:
        save_vector(x_input, args.dump_input)
    return {"status": "ok", "command": "gen-data", "out": args.out,
            "support": int(args.support), "noise": args.noise}


def _cmd_lambda_max(args):
    op, y = _load_instance(args)
    return {"status": "ok", "command": "lambda-max",
            "lambda_max": lambda_max(op, y)}


def _cmd_path(args):
    op, y = _load_instance(args)
    prob = Problem(op, y, lam=0.0)
    lam_stop, rho_stop = None, None
    if args.rho_stop is not None:
        rho_stop = args.rho_stop
    elif args.lambda_stop is not None:
        lam_stop = args.lambda_stop
    else:
        lam_stop = lambda_max(op, y) / 2.0 ** args.stop_exp
    path = homotopy_solve(prob, lambda_stop=lam_stop, rho_stop=rho_stop,
                          limits=_limits(args))
    buf = io.StringIO()
    write_path_csv(path, buf)
    _write_text(args.out, buf.getvalue())
    if args.dump_iterates:
        os.makedirs(args.dump_iterates, exist_ok=True)
        for j, x in enumerate(path.iterates):
            save_vector(x, os.path.join(args.dump_iterates, f"iterate_{j:06d}.l1ve"))
    lo, hi = path.coverage()
    return {"status": "ok", "command": "path", "out": args.out,
            "breakpoints": path.n_breakpoints, "lambda_max": hi,
            "lambda_end": lo, "truncated": path.truncated}


def _cmd_solve(args):
    op, y = _load_instance(args)
    budgets = _parse_budgets(args.budgets, args.budget_min, args.budget_max)
    if args.rho is not None and args.algo != "psd":
        raise UsageError("--rho applies to the psd algorithm only")
    if args.algo == "psd" and args.no_reference and args.rho is None:
        raise UsageError("psd without a reference path needs an explicit --rho")

    if args.algo == "ist_wide":
        wide = wide_variant(Problem(op, y, lam=0.0))
        op = wide.op
    lam_top = lambda_max(op, y)

    reference = None
    lam_metrics = None
    if args.rho is not None:
        prob = Problem(op, y, rho=args.rho)
        if not args.no_reference:
            path = homotopy_solve(Problem(op, y, lam=0.0), rho_stop=args.rho,
                                  limits=_limits(args))
            reference = path.iterates[-1]
            lam_metrics = float(path.lambdas[-1])
    else:
        lam = args.lam if args.lam is not None else lam_top / 2.0 ** args.exp
        if lam < 0 or lam > lam_top:
            raise UsageError(f"lambda must lie in [0, lambda_max={lam_top:g}]")
        lam_metrics = lam
        if not args.no_reference:
            path = homotopy_solve(Problem(op, y, lam=0.0), lambda_stop=lam,
                                  limits=_limits(args))
            reference = eval_path(path, lam)
        if args.algo == "psd":
            prob = Problem(op, y, rho=float(np.abs(reference).sum()))
        else:
            prob = Problem(op, y, lam=lam)

    solver = make_solver(args.algo, prob)
    trace = run_budgeted(solver, budgets, reference=reference,
                         lam_metrics=lam_metrics)
    k_log2 = (math.log2(lam_top / lam_metrics)
              if lam_metrics and lam_metrics > 0 else float("nan"))
    buf = io.StringIO()
    write_trace_csv(trace, buf, k_log2=k_log2)
    _write_text(args.out, buf.getvalue())
    final = trace.snapshots[-1]
    return {"status": "ok", "command": "solve", "out": args.out,
            "algo": args.algo, "final_cost": final.cost,
            "final_e": None if np.isnan(final.error) else final.error}


def _bench_common(args):
    op, y = _load_instance(args)
    budgets = _parse_budgets(args.budgets, args.budget_min, args.budget_max)
    exponents = _grid_exponents(args)
    return Problem(op, y, lam=0.0), budgets, exponents


def _cmd_isochrone(args):
    prob, budgets, exponents = _bench_common(args)
    if args.algo == "ist_wide":
        prob = wide_variant(prob)
    refset = build_reference(prob, exponents, _limits(args))
    grid = isochrone(refset, args.algo, budgets, workers=_workers(args))
    buf = io.StringIO()
    write_isochrone_csv(grid, buf)
    _write_text(args.out, buf.getvalue())
    return {"status": "ok", "command": "isochrone", "out": args.out,
            "algo": args.algo, "gridpoints": len(refset.grid),
            "budgets": budgets}


def _cmd_compare(args):
    prob, budgets, exponents = _bench_common(args)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    if not algos:
        raise UsageError("--algos needs at least one algorithm")
    for algo in algos:
        if algo not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {algo!r}")
    grids, summary = compare_suite(prob, algos, exponents, budgets,
                                   limits=_limits(args), workers=_workers(args))
    buf = io.StringIO()
    write_isochrone_csv([grids[a] for a in algos], buf)
    _write_text(args.out, buf.getvalue())
    if args.summary:
        sbuf = io.StringIO()
        write_summary_json(summary, sbuf)
        _write_text(args.summary, sbuf.getvalue())
    return {"status": "ok", "command": "compare", "out": args.out,
            "algos": algos, "gridpoints": len(exponents)}


def _cmd_warmstart(args):
    op, y = _load_instance(args)
    if args.n_steps < 1:
        raise UsageError("--n-steps must be >= 1")
    prob = Problem(op, y, lam=0.0)
    lam_top = lambda_max(op, y)
    limits = _limits(args)

    if args.method == "fpc":
        if args.stop_exp is None:
            raise UsageError("fpc needs --stop-exp")
        lam_stop = lam_top / 2.0 ** args.stop_exp
        path = None
        if not args.no_reference:
            path = homotopy_solve(prob, lambda_stop=lam_stop, limits=limits)
        schedule = geometric_schedule(lam_top, lam_stop, args.n_steps)
        records = fpc_run(prob, schedule, reference_path=path)
        terminal = {"lambda_stop": lam_stop}
    else:
        path = None
        if args.rho_stop is not None:
            rho_stop = args.rho_stop
            if not args.no_reference:
                path = homotopy_solve(prob, rho_stop=rho_stop, limits=limits)
        else:
            lam_stop = lam_top / 2.0 ** args.stop_exp
            path = homotopy_solve(prob, lambda_stop=lam_stop, limits=limits)
            rho_stop = float(np.abs(path.iterates[-1]).sum())
            if args.no_reference:
                path = None
        if rho_stop <= 0:
            raise UsageError("terminal radius must be positive")
        schedule = arithmetic_schedule(rho_stop, args.n_steps)
        records = apsd_run(prob, schedule, reference_path=path)
        terminal = {"rho_stop": rho_stop}

    buf = io.StringIO()
    write_warmstart_csv(args.method, records, prob, buf)
    _write_text(args.out, buf.getvalue())
    final = records[-1]
    payload = {"status": "ok", "command": "warmstart", "out": args.out,
               "method": args.method, "n_steps": args.n_steps,
               "total_cost": final.cost,
               "final_e": None if np.isnan(final.error) else final.error}
    payload.update(terminal)
    return payload


def _cmd_complexity(args):
    op, y = _load_instance(args)
    prob = Problem(op, y, lam=0.0)
    lam_stop = lambda_max(op, y) / 2.0 ** args.stop_exp
    path = homotopy_solve(prob, lambda_stop=lam_stop, limits=_limits(args))
    rows = path_complexity(path)
    lines = ["support_size,breakpoint_count,cost_units,wall_seconds"]
    for s, count, cost, wall in rows:
        lines.append(f"{s},{count},{cost!r},{wall!r}")
    _write_text(args.out, "\n".join(lines) + "\n")
    payload = {"status": "ok", "command": "complexity", "out": args.out,
               "breakpoints": len(rows), "truncated": path.truncated}
    try:
        payload["loglog_slope"] = complexity_slope(rows, args.fit_min, args.fit_max)
    except ValueError:
        payload["loglog_slope"] = None
    return payload


_HANDLERS = {
    "gen-operator": _cmd_gen_operator,
    "gen-data": _cmd_gen_data,
    "lambda-max": _cmd_lambda_max,
    "path": _cmd_path,
    "solve": _cmd_solve,
    "isochrone": _cmd_isochrone,
    "compare": _cmd_compare,
    "warmstart": _cmd_warmstart,
    "complexity": _cmd_complexity,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        payload = _HANDLERS[args.command](args)
    except UsageError as exc:
        print(json.dumps({"status": "usage-error", "message": str(exc)}))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileFormatError as exc:
        print(json.dumps({"status": "usage-error", "message": str(exc)}))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PathDegenerateError, OracleGateError, StepFailure,
            np.linalg.LinAlgError) as exc:
        print(json.dumps({"status": "numerical-error", "message": str(exc)}))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(payload))
    return 0


if __name__ == "__main__":
    sys.exit(main())

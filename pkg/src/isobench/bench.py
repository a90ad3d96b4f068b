"""Approximation-isochrone benchmarks.

The methodology: compute exact minimizers on a grid of penalty values
lam = lambda_max / 2^k with the direct path solver, run each iterative
algorithm from scratch at every gridpoint under a ladder of matvec budgets,
and record the relative error to the exact minimizer per (gridpoint,
budget) cell.  A row of cells at one budget is an isochrone: it shows where
an algorithm converges fast (widely spaced isochrones) and where it stalls
(isochrones sticking together).

Budgets are logical matvec units, so grids are machine-independent;
wall-clock is recorded alongside but never part of golden comparisons.
Cells are independent and may be fanned out over worker threads; the output
is identical to serial execution.
"""

import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .homotopy import PathLimits, eval_path, homotopy_solve
from .operators import normalize_spectral, spectral_norm
from .prox import Problem, fixed_point_residual
from .prox import lambda_max as _lambda_max
from .solvers import ALGORITHMS, StepFailure, make_solver, run_budgeted

__all__ = [
    "OracleGateError",
    "LambdaGrid",
    "ReferenceSet",
    "IsochroneGrid",
    "REFERENCE_GATE",
    "default_budget_ladder",
    "build_reference",
    "isochrone",
    "compare_suite",
    "wide_variant",
    "write_isochrone_csv",
    "write_summary_json",
]

# Every reference must satisfy the fixed-point certificate at this level
# before any benchmark cell runs.
REFERENCE_GATE = 1e-8


class OracleGateError(RuntimeError):
    """A path-produced reference failed the fixed-point residual gate."""


class LambdaGrid:
    """Penalty gridpoints lam_k = lambda_max / 2^k with oracle support sizes."""

    __slots__ = ("exponents", "lambdas", "lambda_max", "support_sizes")

    def __init__(self, exponents, lambda_max, support_sizes=None):
        exponents = np.asarray(exponents, dtype=np.float64)
        if exponents.size < 1 or np.any(np.diff(exponents) <= 0):
            raise ValueError("exponents must be non-empty and increasing")
        if np.any(exponents < 0):
            raise ValueError("exponents must be >= 0")
        self.exponents = exponents
        self.lambda_max = float(lambda_max)
        self.lambdas = self.lambda_max / 2.0 ** exponents
        self.support_sizes = support_sizes

    def __len__(self):
        return self.exponents.size


class ReferenceSet:
    """Exact minimizers per gridpoint, shared read-only by benchmark cells.

    references[i] is None when the path did not cover gridpoint i (the cell
    is reported unavailable, never extrapolated).
    """

    __slots__ = ("prob", "grid", "path", "references")

    def __init__(self, prob, grid, path, references):
        self.prob = prob
        self.grid = grid
        self.path = path
        self.references = references

    def reference_at(self, i):
        return self.references[i]


def default_budget_ladder(lo=10, hi=100_000, n=10):
    """n logarithmically spaced integer budgets from lo to hi."""
    if lo < 1 or hi <= lo or n < 2:
        raise ValueError("need 1 <= lo < hi and n >= 2")
    raw = np.rint(np.geomspace(lo, hi, n)).astype(np.int64)
    out = []
    for b in raw:
        if not out or b > out[-1]:
            out.append(int(b))
    return out


def build_reference(prob, exponents, limits=None):
    """One path solve, then exact minimizers at every covered gridpoint.

    Every produced reference must pass the fixed-point residual gate at
    REFERENCE_GATE; a failure raises OracleGateError rather than silently
    benchmarking against a bad oracle.
    """
    if limits is None:
        limits = PathLimits()
    lam_max = _lambda_max(prob.op, prob.y)
    grid = LambdaGrid(exponents, lam_max)
    path = homotopy_solve(prob, lambda_stop=float(grid.lambdas[-1]), limits=limits)
    lam_end = path.coverage()[0]
    references = []
    supports = np.zeros(len(grid), dtype=np.int64)
    for i, lam in enumerate(grid.lambdas):
        if lam < lam_end:
            references.append(None)
            supports[i] = -1
            continue
        ref = eval_path(path, lam)
        if np.linalg.norm(ref) > 0:
            resid = fixed_point_residual(prob.with_lam(float(lam)), ref)
            if resid > REFERENCE_GATE:
                raise OracleGateError(
                    f"reference at k={grid.exponents[i]:g} failed the "
                    f"fixed-point gate: {resid:.3e} > {REFERENCE_GATE:.0e}"
                )
        references.append(ref)
        supports[i] = int(np.count_nonzero(ref))
    grid.support_sizes = supports
    return ReferenceSet(prob, grid, path, references)


class IsochroneGrid:
    """Errors of one algorithm over (gridpoint, budget) cells.

    errors[i, b] is relative to the exact minimizer, except on rows where
    the minimizer is zero (support_sizes[i] == 0): those store the absolute
    norm ||x|| and are flagged in `absolute`.  Failed cells hold NaN from
    the failure point on; unavailable gridpoints are all-NaN.
    """

    __slots__ = ("algo", "grid", "budgets", "errors", "costs", "functional",
                 "wall", "absolute", "failed", "available")

    def __init__(self, algo, grid, budgets, errors, costs, functional, wall,
                 absolute, failed, available):
        self.algo = algo
        self.grid = grid
        self.budgets = budgets
        self.errors = errors
        self.costs = costs
        self.functional = functional
        self.wall = wall
        self.absolute = absolute
        self.failed = failed
        self.available = available

    def final_errors(self):
        """Error at the largest budget per gridpoint."""
        return self.errors[:, -1]


def _run_cell(refset, algo, i, budgets):
    grid = refset.grid
    lam = float(grid.lambdas[i])
    ref = refset.references[i]
    nb = len(budgets)
    row = {
        "errors": np.full(nb, np.nan),
        "costs": np.full(nb, -1, dtype=np.int64),
        "functional": np.full(nb, np.nan),
        "wall": np.full(nb, np.nan),
        "absolute": False,
        "failed": False,
        "available": ref is not None,
    }
    if ref is None:
        return row
    base = refset.prob
    if algo == "psd":
        prob = Problem(base.op, base.y, rho=float(np.abs(ref).sum()))
    else:
        prob = Problem(base.op, base.y, lam=lam)
    solver = make_solver(algo, prob)
    try:
        trace = run_budgeted(solver, budgets, reference=ref, lam_metrics=lam)
    except StepFailure as exc:
        row["failed"] = True
        trace = exc.trace
    if trace is not None:
        for b, snap in enumerate(trace.snapshots):
            row["errors"][b] = snap.error
            row["costs"][b] = snap.cost
            row["functional"][b] = snap.functional
            row["wall"][b] = snap.wall
            row["absolute"] = row["absolute"] or snap.error_is_absolute
    return row


def isochrone(refset, algo, budgets, workers=1):
    """Budgeted runs of one algorithm over every gridpoint.

    Each cell starts a fresh solver at x = 0; `workers` threads fan out over
    gridpoints without changing the result.
    """
    budgets = [int(b) for b in budgets]
    grid = refset.grid
    n_k = len(grid)
    if workers is None or workers < 1:
        workers = 1
    if workers == 1:
        rows = [_run_cell(refset, algo, i, budgets) for i in range(n_k)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda i: _run_cell(refset, algo, i, budgets),
                                 range(n_k)))
    nb = len(budgets)
    errors = np.vstack([r["errors"] for r in rows]) if n_k else np.zeros((0, nb))
    costs = np.vstack([r["costs"] for r in rows])
    functional = np.vstack([r["functional"] for r in rows])
    wall = np.vstack([r["wall"] for r in rows])
    return IsochroneGrid(
        algo, grid, budgets, errors, costs, functional, wall,
        absolute=np.array([r["absolute"] for r in rows]),
        failed=np.array([r["failed"] for r in rows]),
        available=np.array([r["available"] for r in rows]),
    )


def wide_variant(prob):
    """The same instance on the operator rescaled by sqrt(2) (for ist_wide)."""
    op_wide = normalize_spectral(prob.op, np.sqrt(2.0) * spectral_norm(prob.op))
    return Problem(op_wide, prob.y, lam=0.0)


def compare_suite(prob, algos, exponents, budgets, limits=None, workers=1):
    """Isochrone grids for several algorithms on one instance.

    ist_wide runs on the sqrt(2)-rescaled operator with its own exact
    references (rescaling changes the minimizers); all other algorithms
    share one reference set.

    Returns (grids, summary): grids maps algo -> IsochroneGrid; summary maps
    algo -> list of {"k", "e_final"} at the largest budget.
    """
    for algo in algos:
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algo!r}")
    refset = build_reference(prob, exponents, limits)
    refset_wide = None
    if "ist_wide" in algos:
        refset_wide = build_reference(wide_variant(prob), exponents, limits)
    grids = {}
    for algo in algos:
        rs = refset_wide if algo == "ist_wide" else refset
        grids[algo] = isochrone(rs, algo, budgets, workers=workers)
    summary = {
        algo: [
            {"k": float(g.grid.exponents[i]), "e_final": _jsonable(g.errors[i, -1])}
            for i in range(len(g.grid))
        ]
        for algo, g in grids.items()
    }
    return grids, summary


def _jsonable(v):
    v = float(v)
    return None if np.isnan(v) else v


def write_isochrone_csv(grids, fileobj):
    """One data row per cell per budget.

    Columns (algo, k_log2, lambda, support_size, budget, cost, e, F,
    wall_seconds).  Rows with support_size 0 report the absolute norm in the
    e column (the minimizer is zero there); support_size -1 marks gridpoints
    the oracle did not cover.  The wall_seconds column is excluded from
    golden comparisons.
    """
    if isinstance(grids, IsochroneGrid):
        grids = [grids]
    fileobj.write("algo,k_log2,lambda,support_size,budget,cost,e,F,wall_seconds\n")
    for g in grids:
        grid = g.grid
        for i in range(len(grid)):
            for b, budget in enumerate(g.budgets):
                fileobj.write(
                    f"{g.algo},{float(grid.exponents[i])!r},{float(grid.lambdas[i])!r},"
                    f"{grid.support_sizes[i]},{budget},{g.costs[i, b]},"
                    f"{float(g.errors[i, b])!r},{float(g.functional[i, b])!r},"
                    f"{float(g.wall[i, b])!r}\n"
                )


def write_summary_json(summary, fileobj):
    json.dump(summary, fileobj, indent=2, sort_keys=True)
    fileobj.write("\n")

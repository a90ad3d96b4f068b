"""The six iterative minimization schemes behind one stepping interface.

Algorithms (all start at x = 0):

  ist       thresholded Landweber update  x <- S_lam[x + K^T(y - Kx)]
  ist_wide  the same update; callers supply the operator renormalized to
            0.999*sqrt(2), where the functional is no longer guaranteed to
            decrease every step
  fista     ist accelerated by extrapolation with the t-sequence
            t+ = (1 + sqrt(1 + 4 t^2))/2
  psd       projected steepest descent on the l1 ball of radius rho with the
            exact step beta = ||r||^2 / ||Kr||^2
  gpsr      gradient projection on the split x = u - v, u, v >= 0
            (basic variant: backtracking along the projection arc)
  l1ls      log-barrier interior-point outer steps with truncated-Newton
            directions from diagonally preconditioned conjugate gradients

Every matvec goes through operators.apply with the state's counter, so the
cost clock equals the number of operator applications exactly.  Per step:
ist/ist_wide/fista cost 2 units; psd costs 3; gpsr costs 3 plus 1 per line
search trial; l1ls costs 2 for the gap check, 2 per CG iteration, and 1 per
line search trial.
"""

import time

import numpy as np

from .operators import CostCounter, apply
from .prox import (
    fixed_point_residual,
    functional_value,
    project_l1,
    soft_threshold,
)

__all__ = [
    "ALGORITHMS",
    "PENALIZED_ALGORITHMS",
    "SolverState",
    "Snapshot",
    "Trace",
    "StepFailure",
    "make_solver",
    "step",
    "ist_step",
    "fista_step",
    "psd_step",
    "gpsr_step",
    "l1ls_step",
    "run_budgeted",
    "write_trace_csv",
]

ALGORITHMS = ("ist", "ist_wide", "psd", "gpsr", "l1ls", "fista")
PENALIZED_ALGORITHMS = ("ist", "ist_wide", "gpsr", "l1ls", "fista")

GPSR_MAX_TRIALS = 50
GPSR_SHRINK = 0.5
GPSR_SUFFICIENT = 0.1
L1LS_MU = 2.0
L1LS_CG_CAP = 200
L1LS_ARMIJO = 0.01
L1LS_SHRINK = 0.5
L1LS_MAX_TRIALS = 60


class StepFailure(RuntimeError):
    """A solver step failed; ``.trace`` holds any partial trace collected."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class SolverState:
    """Full internal state of one iterative run, owned by a single worker.

    Construct through :func:`make_solver`.  `cost` is the cumulative matvec
    count; it strictly increases with every step.
    """

    def __init__(self, algo, prob):
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algo!r}")
        need = "constrained" if algo == "psd" else "penalized"
        if prob.mode != need:
            raise ValueError(f"{algo} needs a {need} problem, got {prob.mode}")
        self.algo = algo
        self.prob = prob
        self.x = np.zeros(prob.op.p)
        self.counter = CostCounter()
        self.n = 0
        self.converged = False
        if algo == "fista":
            self.x_prev = self.x.copy()
            self.t = 1.0
        elif algo == "gpsr":
            self.u = np.zeros(prob.op.p)
            self.v = np.zeros(prob.op.p)
        elif algo == "l1ls":
            self.u = np.ones(prob.op.p)
            self.t_bar = 1.0 / prob.lam if prob.lam > 0 else 1.0
            self.gap = np.inf
            self.cg_capped = False
            # column norms of K for the CG preconditioner, computed once from
            # the entries (not an operator application)
            self.col_sq = np.einsum("ij,ij->j", prob.op.entries, prob.op.entries)

    @property
    def cost(self):
        return self.counter.units


def make_solver(algo, prob):
    """Fresh solver state at x = 0 with a zeroed cost clock."""
    return SolverState(algo, prob)


def ist_step(s):
    """One thresholded Landweber update (2 units)."""
    if s.algo not in ("ist", "ist_wide"):
        raise ValueError(f"ist_step on {s.algo} state")
    op, y, lam = s.prob.op, s.prob.y, s.prob.lam
    r = y - apply(op, s.x, counter=s.counter)
    g = apply(op, r, adjoint=True, counter=s.counter)
    s.x = soft_threshold(s.x + g, lam)
    s.n += 1
    return s


def fista_step(s):
    """One accelerated update (2 units); the first step equals an ist step."""
    if s.algo != "fista":
        raise ValueError(f"fista_step on {s.algo} state")
    op, y, lam = s.prob.op, s.prob.y, s.prob.lam
    t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * s.t * s.t))
    w = s.x + ((s.t - 1.0) / t_next) * (s.x - s.x_prev)
    r = y - apply(op, w, counter=s.counter)
    g = apply(op, r, adjoint=True, counter=s.counter)
    s.x_prev = s.x
    s.x = soft_threshold(w + g, lam)
    s.t = t_next
    s.n += 1
    return s


def psd_step(s):
    """One projected steepest-descent step (3 units)."""
    if s.algo != "psd":
        raise ValueError(f"psd_step on {s.algo} state")
    op, y, rho = s.prob.op, s.prob.y, s.prob.rho
    kx = apply(op, s.x, counter=s.counter)
    r = apply(op, y - kx, adjoint=True, counter=s.counter)
    rr = float(r @ r)
    if rr == 0.0:
        s.converged = True
        return s
    kr = apply(op, r, counter=s.counter)
    krkr = float(kr @ kr)
    if krkr == 0.0:
        s.converged = True
        return s
    beta = rr / krkr
    s.x = project_l1(s.x + beta * r, rho)
    s.n += 1
    return s


def _gpsr_objective(op, y, lam, u, v, counter):
    """Quadratic in the split variables; one unit for the K application."""
    res = apply(op, u - v, counter=counter) - y
    return float(res @ res + 2.0 * lam * (u.sum() + v.sum()))


def gpsr_step(s):
    """One gradient-projection step on the non-negative split.

    Costs 2 units for the gradient, 1 for the curvature of the initial step
    length, and 1 per backtracking trial.
    """
    if s.algo != "gpsr":
        raise ValueError(f"gpsr_step on {s.algo} state")
    op, y, lam = s.prob.op, s.prob.y, s.prob.lam
    res = apply(op, s.u - s.v, counter=s.counter) - y
    core = apply(op, res, adjoint=True, counter=s.counter)
    gu = 2.0 * core + 2.0 * lam
    gv = -2.0 * core + 2.0 * lam
    q0 = float(res @ res + 2.0 * lam * (s.u.sum() + s.v.sum()))

    kw = apply(op, gu - gv, counter=s.counter)
    curvature = 2.0 * float(kw @ kw)
    gnorm_sq = float(gu @ gu + gv @ gv)
    if curvature > 0:
        alpha = np.clip(gnorm_sq / curvature, 1e-30, 1e30)
    else:
        alpha = 1.0

    for _ in range(GPSR_MAX_TRIALS):
        u_new = np.maximum(0.0, s.u - alpha * gu)
        v_new = np.maximum(0.0, s.v - alpha * gv)
        decrease = float(gu @ (s.u - u_new) + gv @ (s.v - v_new))
        q_new = _gpsr_objective(op, y, lam, u_new, v_new, s.counter)
        if q_new <= q0 - GPSR_SUFFICIENT * decrease:
            if decrease == 0.0:
                s.converged = True  # projection no longer moves the point
            s.u, s.v = u_new, v_new
            s.x = s.u - s.v
            s.n += 1
            return s
        alpha *= GPSR_SHRINK
    raise StepFailure("stalled line search in gpsr step")


def _l1ls_barrier(op, y, lam, t_bar, x, u, counter):
    """Barrier objective; one unit for the K application.  Returns +inf when
    the point is not strictly interior."""
    f1 = u + x
    f2 = u - x
    if np.any(f1 <= 0) or np.any(f2 <= 0):
        return np.inf
    res = apply(op, x, counter=counter) - y
    return float(t_bar * (res @ res + 2.0 * lam * u.sum())
                 - np.log(f1).sum() - np.log(f2).sum())


def l1ls_step(s):
    """One interior-point outer iteration.

    Gap check costs 2 units, each preconditioned-CG iteration 2, each line
    search trial 1.  Raises on loss of strict interiority; a CG that hits its
    cap is accepted as-is with ``cg_capped`` set.
    """
    if s.algo != "l1ls":
        raise ValueError(f"l1ls_step on {s.algo} state")
    op, y, lam = s.prob.op, s.prob.y, s.prob.lam
    x, u = s.x, s.u
    p = op.p

    f1 = u + x
    f2 = u - x
    if np.any(f1 <= 0) or np.any(f2 <= 0):
        raise StepFailure("barrier violation: iterate left the interior")

    res = apply(op, x, counter=s.counter) - y
    grad_ls = apply(op, res, adjoint=True, counter=s.counter)  # (1/2) dF/dx

    # duality gap from the scaled-residual dual point
    corr = float(np.max(np.abs(grad_ls)))
    scale = min(1.0, lam / corr) if corr > 0 else 1.0
    nu = 2.0 * scale * res
    primal = float(res @ res + 2.0 * lam * np.abs(x).sum())
    dual = float(-0.25 * (nu @ nu) - nu @ y)
    gap = primal - dual
    s.gap = gap

    t_bar = s.t_bar
    grad_x = 2.0 * t_bar * grad_ls - (1.0 / f1 - 1.0 / f2)
    grad_u = 2.0 * t_bar * lam - (1.0 / f1 + 1.0 / f2)
    d1 = 1.0 / f1**2 + 1.0 / f2**2
    d2 = 1.0 / f1**2 - 1.0 / f2**2

    # Newton system reduced to x via the diagonal u-block
    schur = d1 - d2 * d2 / d1
    rhs = -(grad_x - (d2 / d1) * grad_u)
    precond = 2.0 * t_bar * s.col_sq + schur

    def hessmul(w):
        kw = apply(op, w, counter=s.counter)
        return 2.0 * t_bar * apply(op, kw, adjoint=True, counter=s.counter) + schur * w

    dx, capped = _pcg(hessmul, rhs, precond,
                      tol=min(0.1, 0.3 * max(gap, 0.0)), cap=L1LS_CG_CAP)
    s.cg_capped = capped
    du = (-grad_u - d2 * dx) / d1

    # largest step keeping strict interiority, then Armijo backtracking
    step_len = 1.0
    df1 = du + dx
    df2 = du - dx
    neg = df1 < 0
    if np.any(neg):
        step_len = min(step_len, 0.99 * float(np.min(-f1[neg] / df1[neg])))
    neg = df2 < 0
    if np.any(neg):
        step_len = min(step_len, 0.99 * float(np.min(-f2[neg] / df2[neg])))

    phi0 = float(t_bar * (res @ res + 2.0 * lam * u.sum())
                 - np.log(f1).sum() - np.log(f2).sum())
    slope = float(grad_x @ dx + grad_u @ du)
    for _ in range(L1LS_MAX_TRIALS):
        x_new = x + step_len * dx
        u_new = u + step_len * du
        phi = _l1ls_barrier(op, y, lam, t_bar, x_new, u_new, s.counter)
        if phi <= phi0 + L1LS_ARMIJO * step_len * slope:
            break
        step_len *= L1LS_SHRINK
    else:
        raise StepFailure("stalled line search in l1ls step")

    s.x = x_new
    s.u = u_new
    if step_len >= 0.5 and gap > 0:
        s.t_bar = max(L1LS_MU * min(2.0 * p / gap, t_bar), t_bar)
    s.n += 1
    return s


def _pcg(hessmul, rhs, precond, tol, cap):
    """Diagonally preconditioned conjugate gradients for the Newton system.

    Returns (solution, hit_cap).  `tol` is relative to ||rhs||.
    """
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = r / precond
    d = z.copy()
    rz = float(r @ z)
    target = max(tol, 1e-14) * float(np.linalg.norm(rhs))
    if np.linalg.norm(r) <= target or rz == 0.0:
        return x, False
    for _ in range(cap):
        hd = hessmul(d)
        dhd = float(d @ hd)
        if dhd <= 0:
            break
        alpha = rz / dhd
        x += alpha * d
        r -= alpha * hd
        if np.linalg.norm(r) <= target:
            return x, False
        z = r / precond
        rz_new = float(r @ z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    return x, True


_STEPPERS = {
    "ist": ist_step,
    "ist_wide": ist_step,
    "fista": fista_step,
    "psd": psd_step,
    "gpsr": gpsr_step,
    "l1ls": l1ls_step,
}


def step(s):
    """Advance the state by one iteration of its own algorithm."""
    return _STEPPERS[s.algo](s)


class Snapshot:
    """One sampled point of a run."""

    __slots__ = ("cost", "n", "error", "error_is_absolute", "functional",
                 "fp_residual", "wall")

    def __init__(self, cost, n, error, error_is_absolute, functional,
                 fp_residual, wall):
        self.cost = cost
        self.n = n
        self.error = error
        self.error_is_absolute = error_is_absolute
        self.functional = functional
        self.fp_residual = fp_residual
        self.wall = wall


class Trace:
    """Snapshots of one budgeted run (costs non-decreasing, one per budget)."""

    def __init__(self, algo, budgets, snapshots):
        self.algo = algo
        self.budgets = list(budgets)
        self.snapshots = snapshots

    def errors(self):
        return np.array([snap.error for snap in self.snapshots])

    def costs(self):
        return np.array([snap.cost for snap in self.snapshots], dtype=np.int64)


def _snapshot(s, reference, lam_metrics, wall):
    x = s.x
    if reference is None:
        err, absolute = np.nan, False
    else:
        ref_norm = float(np.linalg.norm(reference))
        if ref_norm == 0.0:
            err, absolute = float(np.linalg.norm(x)), True
        else:
            err, absolute = float(np.linalg.norm(x - reference) / ref_norm), False
    if lam_metrics is None:
        func = np.nan
        fp = np.nan
    else:
        # diagnostics are measurement, not solver work: no counter
        metrics_prob = s.prob if s.prob.lam == lam_metrics else s.prob.with_lam(lam_metrics)
        func = functional_value(metrics_prob, x)
        fp = fixed_point_residual(metrics_prob, x)
    return Snapshot(s.cost, s.n, err, absolute, func, fp, wall)


def run_budgeted(s, budgets, reference=None, lam_metrics=None):
    """Step a solver, snapshotting the first state at or past each budget.

    Parameters
    ----------
    s : SolverState
    budgets : strictly increasing sequence of cost units
    reference : vector or None
        Exact minimizer; when given, each snapshot records the relative
        error ||x - ref|| / ||ref|| (absolute ||x|| with a flag if ref = 0).
    lam_metrics : float or None
        Penalty for the functional/residual diagnostics; defaults to the
        problem's own lam for penalized problems.

    Errors raised by a step propagate as StepFailure with the partial trace
    attached.
    """
    budgets = [int(b) for b in budgets]
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError("budgets must be strictly increasing")
    if lam_metrics is None and s.prob.mode == "penalized":
        lam_metrics = s.prob.lam
    snapshots = []
    t0 = time.perf_counter()
    trace = Trace(s.algo, budgets, snapshots)
    for b in budgets:
        try:
            while s.cost < b and not s.converged:
                step(s)
        except StepFailure as exc:
            exc.trace = trace
            raise
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            raise StepFailure(str(exc), trace=trace) from exc
        snapshots.append(_snapshot(s, reference, lam_metrics,
                                   time.perf_counter() - t0))
    return trace


def write_trace_csv(trace, fileobj, k_log2=np.nan):
    """Rows (algo, lambda_over_lambda_max_log2, cost, n, e, F, fp_residual,
    wall_seconds); the wall column is excluded from golden comparisons."""
    fileobj.write("algo,lambda_over_lambda_max_log2,cost,n,e,F,fp_residual,wall_seconds\n")
    for snap in trace.snapshots:
        fileobj.write(
            f"{trace.algo},{float(k_log2)!r},{snap.cost},{snap.n},"
            f"{float(snap.error)!r},{float(snap.functional)!r},"
            f"{float(snap.fp_residual)!r},{float(snap.wall)!r}\n"
        )

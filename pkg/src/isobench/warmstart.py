"""Continuation strategies approximating the whole solution path in one run.

Two schemes, each taking exactly one inner step per schedule point:

  fpc   thresholded Landweber steps with a geometrically decreasing
        threshold; step n approximates the minimizer at lam_n
  apsd  steepest-descent steps with exact step length, projected onto l1
        balls of arithmetically increasing radius; step n approximates the
        constrained minimizer at rho_n

Both emit their iterates as they go, which also yields an approximation of
the trade-off curve (residual versus l1 norm) for free.
"""

import numpy as np

from .homotopy import eval_path
from .operators import CostCounter, apply
from .prox import project_l1, soft_threshold

__all__ = [
    "Schedule",
    "geometric_schedule",
    "arithmetic_schedule",
    "ContinuationRecord",
    "fpc_run",
    "apsd_run",
    "rho_to_lambda",
    "pareto_points",
    "write_warmstart_csv",
]

RHO_BISECT_REL = 1e-10  # tolerance on lam, relative to lambda_max


class Schedule:
    """Precomputed parameter sequence for one continuation run.

    `values` has length n_steps + 1; values[0] is the starting point
    (lambda_max, or rho = 0) and values[n_steps] the terminal value.
    """

    __slots__ = ("kind", "n_steps", "values")

    KINDS = ("geometric-lambda", "arithmetic-rho")

    def __init__(self, kind, n_steps, values):
        if kind not in self.KINDS:
            raise ValueError(f"unknown schedule kind {kind!r}")
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (n_steps + 1,):
            raise ValueError("schedule needs n_steps + 1 values")
        self.kind = kind
        self.n_steps = int(n_steps)
        self.values = values


def geometric_schedule(lambda_max, lambda_stop, n_steps):
    """lam_n = lambda_max * alpha^n with alpha chosen so lam_N = lambda_stop."""
    if lambda_max <= 0 or lambda_stop <= 0:
        raise ValueError("lambda endpoints must be positive")
    if lambda_stop > lambda_max:
        raise ValueError("lambda_stop must not exceed lambda_max")
    alpha = (lambda_stop / lambda_max) ** (1.0 / n_steps)
    values = lambda_max * alpha ** np.arange(n_steps + 1)
    values[-1] = lambda_stop
    return Schedule("geometric-lambda", n_steps, values)


def arithmetic_schedule(rho_stop, n_steps):
    """rho_n = n * rho_stop / N, starting from rho_0 = 0."""
    if rho_stop <= 0:
        raise ValueError("rho_stop must be positive")
    values = np.arange(n_steps + 1) * rho_stop / n_steps
    return Schedule("arithmetic-rho", n_steps, values)


class ContinuationRecord:
    """State after schedule point n: the iterate, its error against the exact
    path (NaN when no reference is available), and the cost so far."""

    __slots__ = ("n", "value", "x", "error", "error_is_absolute", "cost")

    def __init__(self, n, value, x, error, error_is_absolute, cost):
        self.n = n
        self.value = value
        self.x = x
        self.error = error
        self.error_is_absolute = error_is_absolute
        self.cost = cost


def _error_against(x, reference):
    if reference is None:
        return np.nan, False
    ref_norm = float(np.linalg.norm(reference))
    if ref_norm == 0.0:
        return float(np.linalg.norm(x)), True
    return float(np.linalg.norm(x - reference) / ref_norm), False


def fpc_run(prob, schedule, reference_path=None):
    """Fixed-point continuation: one thresholded step per schedule point.

    Returns one record per n = 0..N; when `reference_path` is given each
    record's error is measured against the exact minimizer at lam_n.
    """
    if schedule.kind != "geometric-lambda":
        raise ValueError("fpc_run needs a geometric-lambda schedule")
    op, y = prob.op, prob.y
    counter = CostCounter()
    x = np.zeros(op.p)
    records = [_fpc_record(0, schedule.values[0], x, reference_path, counter)]
    for n in range(schedule.n_steps):
        lam_next = schedule.values[n + 1]
        r = y - apply(op, x, counter=counter)
        g = apply(op, r, adjoint=True, counter=counter)
        x = soft_threshold(x + g, lam_next)
        records.append(_fpc_record(n + 1, lam_next, x, reference_path, counter))
    return records


def _fpc_record(n, lam, x, reference_path, counter):
    reference = None
    if reference_path is not None:
        lo, hi = reference_path.coverage()
        if lo <= lam <= hi:
            reference = eval_path(reference_path, lam)
    err, absolute = _error_against(x, reference)
    return ContinuationRecord(n, float(lam), x.copy(), err, absolute, counter.units)


def rho_to_lambda(path, rho, tol_rel=RHO_BISECT_REL):
    """Invert the monotone map lam -> ||x(lam)||_1 on a solved path by
    bisection.  Returns None when rho lies beyond the path's coverage."""
    if rho < 0:
        raise ValueError("rho must be >= 0")
    lo, hi = path.coverage()
    if rho == 0.0:
        return hi
    rho_end = float(np.abs(eval_path(path, lo)).sum())
    if rho > rho_end * (1 + 1e-12):
        return None
    tol = tol_rel * path.lambda_max
    lam_lo, lam_hi = lo, hi  # l1 norm is rho_end at lam_lo, 0 at lam_hi
    while lam_hi - lam_lo > tol:
        mid = 0.5 * (lam_lo + lam_hi)
        if float(np.abs(eval_path(path, mid)).sum()) >= rho:
            lam_lo = mid
        else:
            lam_hi = mid
    return 0.5 * (lam_lo + lam_hi)


def apsd_run(prob, schedule, reference_path=None):
    """Adaptive projected steepest descent: one exact-step descent plus
    projection per schedule point, with radius rho_n = n * rho_stop / N.

    Errors are measured against the constrained minimizer at rho_n, found on
    the reference path through the penalty value matching rho_n.
    """
    if schedule.kind != "arithmetic-rho":
        raise ValueError("apsd_run needs an arithmetic-rho schedule")
    op, y = prob.op, prob.y
    counter = CostCounter()
    x = np.zeros(op.p)
    stalled = False
    records = [_apsd_record(0, schedule.values[0], x, reference_path, counter)]
    for n in range(schedule.n_steps):
        rho_next = schedule.values[n + 1]
        if not stalled:
            r = apply(op, y - apply(op, x, counter=counter), adjoint=True,
                      counter=counter)
            rr = float(r @ r)
            if rr == 0.0:
                stalled = True
            else:
                kr = apply(op, r, counter=counter)
                krkr = float(kr @ kr)
                if krkr == 0.0:
                    stalled = True
                else:
                    x = project_l1(x + (rr / krkr) * r, rho_next)
        records.append(_apsd_record(n + 1, rho_next, x, reference_path, counter))
    return records


def _apsd_record(n, rho, x, reference_path, counter):
    reference = None
    if reference_path is not None:
        lam = rho_to_lambda(reference_path, float(rho))
        if lam is not None:
            reference = eval_path(reference_path, lam)
    err, absolute = _error_against(x, reference)
    return ContinuationRecord(n, float(rho), x.copy(), err, absolute, counter.units)


def pareto_points(samples, prob):
    """(||x||_1, ||Kx - y||^2) per sample; duplicates are kept.

    Samples may be continuation records or plain vectors.
    """
    op, y = prob.op, prob.y
    points = []
    for sample in samples:
        x = sample.x if isinstance(sample, ContinuationRecord) else np.asarray(sample)
        res = op.entries @ x - y
        points.append((float(np.abs(x).sum()), float(res @ res)))
    return points


def write_warmstart_csv(method, records, prob, fileobj):
    """Rows (method, n, lambda_or_rho, e, l1_norm, residual_sq, cost)."""
    fileobj.write("method,n,lambda_or_rho,e,l1_norm,residual_sq,cost\n")
    pareto = pareto_points(records, prob)
    for rec, (l1, res_sq) in zip(records, pareto):
        fileobj.write(
            f"{method},{rec.n},{float(rec.value)!r},{float(rec.error)!r},"
            f"{l1!r},{res_sq!r},{rec.cost}\n"
        )

"""Exact direct solver for the l1-penalized least-squares path.

Traces the minimizer x(lam) from lambda_max down to a stopping value.  The
path is piecewise linear in lam; between support changes the minimizer moves
along a direction obtained from one small linear solve on the active set, so
the whole path is recovered from a finite sequence of breakpoints.  The
optimality conditions maintained at every breakpoint are

    (K^T(y - Kx))_i  = lam * sign_i   for active i,
    |(K^T(y - Kx))_i| <= lam          otherwise.

The resulting path is the ground-truth oracle for every benchmark in this
package.
"""

import time

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .prox import lambda_max as _lambda_max

__all__ = [
    "PathLimits",
    "PathEvent",
    "HomotopyPath",
    "PathDegenerateError",
    "homotopy_solve",
    "eval_path",
    "segment_support",
    "complexity_table",
    "path_complexity",
    "complexity_slope",
    "write_path_csv",
]

# Events closer than TIE_REL * lambda_max are processed at one breakpoint,
# lowest index first; leaves take priority over joins at equal step length.
TIE_REL = 1e-12


class PathDegenerateError(RuntimeError):
    """Active-set Gram matrix is numerically singular (non-unique minimizer
    territory).  Carries the valid partial path in ``.path``."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class PathLimits:
    """Safety limits for a path solve; exceeding one truncates the path with
    a flag instead of failing silently."""

    __slots__ = ("max_breakpoints", "max_support", "min_lambda", "kkt_tol")

    def __init__(self, max_breakpoints=100_000, max_support=100_000,
                 min_lambda=0.0, kkt_tol=1e-9):
        if max_breakpoints < 1 or max_support < 1:
            raise ValueError("limits must be positive")
        if min_lambda < 0 or kkt_tol <= 0:
            raise ValueError("min_lambda must be >= 0 and kkt_tol > 0")
        self.max_breakpoints = int(max_breakpoints)
        self.max_support = int(max_support)
        self.min_lambda = float(min_lambda)
        self.kkt_tol = float(kkt_tol)


class PathEvent:
    """One support change: ('join'|'leave'|'stop') at breakpoint j."""

    __slots__ = ("breakpoint", "kind", "index")

    def __init__(self, breakpoint, kind, index):
        self.breakpoint = breakpoint
        self.kind = kind
        self.index = index

    def __repr__(self):
        return f"PathEvent(j={self.breakpoint}, {self.kind}, i={self.index})"

    def __eq__(self, other):
        return (self.breakpoint, self.kind, self.index) == \
               (other.breakpoint, other.kind, other.index)


class HomotopyPath:
    """Breakpoints of the exact solution path, in decreasing lam order.

    lambdas[0] is lambda_max with iterate 0.  supports[j]/signs[j] describe
    the active set governing the segment [lambdas[j+1], lambdas[j]].  The
    final breakpoint is the stopping point; if `truncated` is set the solve
    hit a limit before the requested stop.
    """

    def __init__(self, lambdas, iterates, supports, signs, events,
                 lambda_stop, truncated, truncation_reason, flops, wall):
        self.lambdas = np.asarray(lambdas, dtype=np.float64)
        self.iterates = iterates
        self.supports = supports
        self.signs = signs
        self.events = events
        self.lambda_stop = float(lambda_stop)
        self.truncated = bool(truncated)
        self.truncation_reason = truncation_reason
        self.flops = np.asarray(flops, dtype=np.float64)
        self.wall = np.asarray(wall, dtype=np.float64)

    @property
    def lambda_max(self):
        return float(self.lambdas[0])

    @property
    def n_breakpoints(self):
        return len(self.lambdas)

    def coverage(self):
        """(lambda_end, lambda_max) interval the path covers."""
        return float(self.lambdas[-1]), float(self.lambdas[0])

    def l1_norms(self):
        return np.array([np.abs(x).sum() for x in self.iterates])

    def support_sizes(self):
        return np.array([len(s) for s in self.supports], dtype=np.int64)


def _chol_direction(gram, rhs):
    """Solve gram @ d = rhs by Cholesky; one jitter retry before giving up."""
    try:
        return cho_solve(cho_factor(gram, lower=True), rhs)
    except LinAlgError:
        pass
    jitter = 1e-12 * np.trace(gram) / gram.shape[0]
    bumped = gram + jitter * np.eye(gram.shape[0])
    return cho_solve(cho_factor(bumped, lower=True), rhs)


def homotopy_solve(prob, lambda_stop=None, rho_stop=None, limits=None):
    """Trace the exact path from lambda_max down to a stopping condition.

    Parameters
    ----------
    prob : Problem
        Supplies the operator and data; its own lam/rho is not consulted.
    lambda_stop : float, optional
        Stop once lam reaches this value (0 <= lambda_stop <= lambda_max).
    rho_stop : float, optional
        Alternatively, stop once ||x||_1 reaches this value.
    limits : PathLimits, optional

    Returns
    -------
    HomotopyPath

    Raises
    ------
    PathDegenerateError
        If the active Gram matrix is singular beyond the jitter fallback;
        the exception carries the valid partial path in ``.path``.
    """
    if (lambda_stop is None) == (rho_stop is None):
        raise ValueError("exactly one of lambda_stop and rho_stop must be given")
    if limits is None:
        limits = PathLimits()
    K = prob.op.entries
    y = prob.y
    m, p = K.shape
    t0 = time.perf_counter()

    lam_max = _lambda_max(prob.op, y)
    if lambda_stop is not None:
        if lambda_stop > lam_max:
            raise ValueError("lambda_stop exceeds lambda_max; nothing to trace")
        if lambda_stop < 0:
            raise ValueError("lambda_stop must be >= 0")
    elif rho_stop < 0:
        raise ValueError("rho_stop must be >= 0")

    tie_tol = TIE_REL * lam_max

    lambdas, iterates, supports, signs_log = [], [], [], []
    events, flops, wall = [], [], []
    flop_count = 2.0 * m * p  # the lambda_max correlation pass

    def record(lam, x, active, signs):
        lambdas.append(lam)
        iterates.append(x.copy())
        supports.append(np.array(active, dtype=np.int64))
        signs_log.append(np.array([signs[i] for i in active], dtype=np.int64))
        flops.append(flop_count)
        wall.append(time.perf_counter() - t0)

    def make_path(lam_end, truncated, reason):
        return HomotopyPath(lambdas, iterates, supports, signs_log, events,
                            lam_end, truncated, reason, flops, wall)

    x = np.zeros(p)
    lam = lam_max

    if lam_max == 0.0:
        # zero data: the path is the single point x = 0 for every lam
        events.append(PathEvent(0, "stop", -1))
        record(0.0, x, [], {})
        return make_path(0.0, False, None)

    c = K.T @ (y - K @ x)
    flop_count += 4.0 * m * p

    # seed the active set with every index at the lambda_max boundary
    at_max = np.nonzero(np.abs(c) >= lam_max - tie_tol)[0]
    active = sorted(int(i) for i in at_max)
    signs = {i: int(np.sign(c[i])) for i in active}
    for i in active:
        events.append(PathEvent(0, "join", i))
    record(lam, x, active, signs)

    if (lambda_stop is not None and lambda_stop == lam_max) or rho_stop == 0.0:
        events.append(PathEvent(0, "stop", -1))
        return make_path(lam, False, None)

    just_left = set()
    while True:
        j = len(lambdas)  # index the next breakpoint will get
        if j > limits.max_breakpoints:
            return make_path(lam, True, "max_breakpoints")
        s_active = len(active)
        if s_active > limits.max_support:
            return make_path(lam, True, "max_support")
        if s_active == 0:
            # cannot happen for lam < lambda_max (x = 0 would violate
            # optimality); defensive truncation
            return make_path(lam, True, "empty_support")

        idx = np.array(active, dtype=np.int64)
        sgn = np.array([signs[i] for i in active], dtype=np.float64)
        KA = K[:, idx]
        gram = KA.T @ KA
        flop_count += 2.0 * m * s_active * s_active
        try:
            d_active = _chol_direction(gram, sgn)
        except LinAlgError as exc:
            raise PathDegenerateError(
                f"degenerate support of size {s_active} at lam={lam:.6g}",
                path=make_path(lam, True, "degenerate"),
            ) from exc
        flop_count += s_active ** 3 / 3.0 + 2.0 * s_active * s_active

        # a direction moving a just-joined (zero-valued) component against
        # its sign would break the optimality conditions immediately
        fresh = x[idx] == 0.0
        if np.any(fresh & (d_active * sgn <= 0.0)):
            raise PathDegenerateError(
                f"inconsistent direction at lam={lam:.6g}",
                path=make_path(lam, True, "degenerate"),
            )

        v = KA @ d_active
        a = K.T @ v
        flop_count += 2.0 * m * s_active + 2.0 * m * p

        # join candidates: inactive |correlation| catches the shrinking lam
        t_join = np.full(p, np.inf)
        inactive = np.ones(p, dtype=bool)
        inactive[idx] = False
        for i in just_left:
            inactive[i] = False
        inact = np.nonzero(inactive)[0]
        if inact.size:
            ci, ai = c[inact], a[inact]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_plus = (lam - ci) / (1.0 - ai)
                t_minus = (lam + ci) / (1.0 + ai)
            t_plus[~(t_plus > tie_tol)] = np.inf
            t_minus[~(t_minus > tie_tol)] = np.inf
            t_join[inact] = np.minimum(t_plus, t_minus)

        # leave candidates: an active component crosses zero
        with np.errstate(divide="ignore", invalid="ignore"):
            t_leave = -x[idx] / d_active
        t_leave[~(t_leave > tie_tol)] = np.inf

        t_event = min(t_join.min(), t_leave.min() if t_leave.size else np.inf)

        if lambda_stop is not None:
            t_stop = lam - lambda_stop
        else:
            slope = float(sgn @ d_active)  # d||x||_1/dt; > 0 for a PD Gram
            t_stop = (rho_stop - np.abs(x).sum()) / slope if slope > 0 else np.inf
            t_stop = max(t_stop, 0.0)

        if t_stop <= t_event + tie_tol and t_stop <= lam:
            if t_stop <= 0.0:
                # stop value already attained at the last breakpoint
                events.append(PathEvent(j - 1, "stop", -1))
                return make_path(lam, False, None)
            x[idx] += t_stop * d_active
            # land exactly on the requested value, not lam - t_stop rounded
            lam = lambda_stop if lambda_stop is not None else lam - t_stop
            events.append(PathEvent(j, "stop", -1))
            record(lam, x, active, signs)
            return make_path(lam, False, None)

        if t_event > lam:
            # no event before lam reaches zero and the requested stop is
            # unreachable (rho_stop beyond the unpenalized solution)
            x[idx] += lam * d_active
            lam = 0.0
            events.append(PathEvent(j, "stop", -1))
            record(lam, x, active, signs)
            return make_path(lam, True, "stop_unreachable")

        if lam - t_event < limits.min_lambda:
            t_trunc = lam - limits.min_lambda
            x[idx] += t_trunc * d_active
            lam = limits.min_lambda
            events.append(PathEvent(j, "stop", -1))
            record(lam, x, active, signs)
            return make_path(lam, True, "min_lambda")

        # advance to the event breakpoint; process everything inside the tie
        # window, leaves first (and exclusively, at equal step), low index
        # first
        x[idx] += t_event * d_active
        lam -= t_event
        c = K.T @ (y - K @ x)
        flop_count += 4.0 * m * p + 2.0 * p

        window = t_event + tie_tol
        leaves = sorted(int(idx[k]) for k in np.nonzero(t_leave <= window)[0])
        joins = [] if leaves else sorted(int(i) for i in np.nonzero(t_join <= window)[0])
        just_left = set()
        for i in leaves:
            active.remove(i)
            del signs[i]
            x[i] = 0.0
            events.append(PathEvent(j, "leave", i))
            just_left.add(i)
        for i in joins:
            active.append(i)
            signs[i] = 1 if c[i] > 0 else -1
            events.append(PathEvent(j, "join", i))
        active.sort()
        record(lam, x, active, signs)


def eval_path(path, lam):
    """Exact minimizer at any lam the path covers, by linear interpolation
    between the bracketing breakpoints."""
    lam = float(lam)
    lo, hi = path.coverage()
    if not lo <= lam <= hi:
        raise ValueError(f"lam={lam:.6g} outside covered range [{lo:.6g}, {hi:.6g}]")
    lambdas = path.lambdas
    # first breakpoint index with lambdas[j] <= lam (lambdas decreasing)
    j = int(np.searchsorted(-lambdas, -lam, side="left"))
    if j == 0:
        return path.iterates[0].copy()
    if lambdas[j] == lam:
        return path.iterates[j].copy()
    lam_a, lam_b = lambdas[j - 1], lambdas[j]
    w = (lam_a - lam) / (lam_a - lam_b)
    return path.iterates[j - 1] + w * (path.iterates[j] - path.iterates[j - 1])


def segment_support(path, lam):
    """Active set governing the segment containing lam (sorted indices)."""
    lo, hi = path.coverage()
    if not lo <= lam <= hi:
        raise ValueError(f"lam={lam:.6g} outside covered range [{lo:.6g}, {hi:.6g}]")
    j = int(np.searchsorted(-path.lambdas, -lam, side="left"))
    return path.supports[max(j - 1, 0)]


def complexity_table(prob, lambda_stop=None, rho_stop=None, limits=None):
    """Cumulative-cost record of one path solve.

    Returns (support_size, breakpoint_count, cost_units, wall_seconds) rows,
    one per support-changing breakpoint (terminal stop records excluded);
    cost_units is the cumulative floating-point operation estimate of the
    solve up to that breakpoint.
    """
    path = homotopy_solve(prob, lambda_stop=lambda_stop, rho_stop=rho_stop,
                          limits=limits)
    return path_complexity(path)


def path_complexity(path):
    """Cumulative-cost rows (support_size, breakpoint_count, cost, wall) for
    an already-solved path."""
    stops = {ev.breakpoint for ev in path.events if ev.kind == "stop"}
    rows = []
    count = 0
    for j in range(path.n_breakpoints):
        if j in stops:
            continue
        count += 1
        rows.append((int(len(path.supports[j])), count,
                     float(path.flops[j]), float(path.wall[j])))
    return rows


def complexity_slope(rows, s_min, s_max):
    """Log-log slope of first-reach cumulative cost against support size over
    the window [s_min, s_max] (intersected with the attained range)."""
    first = {}
    for s, _, cost, _ in rows:
        if s_min <= s <= s_max and s not in first:
            first[s] = cost
    if len(first) < 2:
        raise ValueError("fewer than two support sizes in the window")
    s_vals = np.array(sorted(first))
    costs = np.array([first[s] for s in s_vals])
    slope = np.polyfit(np.log(s_vals), np.log(costs), 1)[0]
    return float(slope)


def write_path_csv(path, fileobj):
    """One row per event: (j, lambda_j, l1_norm, support_size, event_type,
    event_index)."""
    fileobj.write("j,lambda_j,l1_norm,support_size,event_type,event_index\n")
    l1 = path.l1_norms()
    sizes = path.support_sizes()
    for ev in path.events:
        j = ev.breakpoint
        fileobj.write(
            f"{j},{float(path.lambdas[j])!r},{float(l1[j])!r},{sizes[j]},"
            f"{ev.kind},{ev.index}\n"
        )

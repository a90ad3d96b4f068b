"""Proximal primitives and optimality residuals for the l1 least-squares
functional

    F_lam(x) = ||Kx - y||^2 + 2*lam*||x||_1

and its constrained twin, min ||Kx - y||^2 over the l1 ball of radius rho.
All operations are pure and safe for concurrent use on shared inputs.
"""

import numpy as np

from .operators import apply

__all__ = [
    "Problem",
    "soft_threshold",
    "lambda_max",
    "project_l1",
    "fixed_point_residual",
    "functional_value",
    "lambda_of_rho",
]

# Guards 0/0 in the relative fixed-point residual; x = 0 is a legitimate
# minimizer whenever lam >= lambda_max.
RESIDUAL_FLOOR = 1e-300


class Problem:
    """One penalized or constrained instance: the operator, the data, and
    exactly one of (lam, rho).

    Use ``Problem(op, y, lam=...)`` for the penalized functional and
    ``Problem(op, y, rho=...)`` for minimization over the l1 ball.
    """

    __slots__ = ("op", "y", "lam", "rho")

    def __init__(self, op, y, lam=None, rho=None):
        y = np.array(y, dtype=np.float64, copy=True)
        if y.shape != (op.m,):
            raise ValueError(f"data length {y.shape} does not match m={op.m}")
        if not np.all(np.isfinite(y)):
            raise ValueError("data must be finite")
        if (lam is None) == (rho is None):
            raise ValueError("exactly one of lam and rho must be given")
        if lam is not None and lam < 0:
            raise ValueError("lam must be >= 0")
        if rho is not None and rho < 0:
            raise ValueError("rho must be >= 0")
        y.flags.writeable = False
        self.op = op
        self.y = y
        self.lam = None if lam is None else float(lam)
        self.rho = None if rho is None else float(rho)

    @property
    def mode(self):
        return "penalized" if self.lam is not None else "constrained"

    def with_lam(self, lam):
        return Problem(self.op, self.y, lam=lam)

    def with_rho(self, rho):
        return Problem(self.op, self.y, rho=rho)

    def __repr__(self):
        val = self.lam if self.lam is not None else self.rho
        return f"Problem({self.op.m}x{self.op.p}, {self.mode}, {val})"


def soft_threshold(u, lam):
    """Componentwise shrinkage: u -> sign(u) * max(|u| - lam, 0).

    Components with |u_i| <= lam map to exactly zero (the tie |u_i| = lam
    included).
    """
    if lam < 0:
        raise ValueError("threshold must be >= 0")
    u = np.asarray(u, dtype=np.float64)
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


def lambda_max(op, y, counter=None):
    """Smallest penalty with an all-zero minimizer: max_i |(K^T y)_i|.

    Costs 1 matvec unit.
    """
    return float(np.max(np.abs(apply(op, y, adjoint=True, counter=counter))))


def project_l1(x, rho):
    """Euclidean projection of x onto the l1 ball of radius rho.

    Implemented as soft-thresholding with the exact variable threshold found
    by sorting |x| (no bisection): theta = 0 if ||x||_1 <= rho, otherwise the
    unique theta > 0 with ||S_theta(x)||_1 = rho.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    if a.sum() <= rho:
        return x.copy()
    if rho == 0.0:
        return np.zeros_like(x)
    u = np.sort(a)[::-1]
    cumsum = np.cumsum(u)
    ranks = np.arange(1, x.size + 1)
    # largest k with u_k > (sum of top k - rho)/k; k >= 1 always holds here
    k = int(np.max(np.nonzero(u * ranks > cumsum - rho)[0])) + 1
    theta = (cumsum[k - 1] - rho) / k
    return soft_threshold(x, theta)


def fixed_point_residual(prob, x, counter=None):
    """Relative violation of x = S_lam[x + K^T(y - Kx)]; the exactness
    certificate for a claimed minimizer.  Costs 2 matvec units.
    """
    if prob.mode != "penalized":
        raise ValueError("fixed-point residual needs a penalized problem")
    x = np.asarray(x, dtype=np.float64)
    r = prob.y - apply(prob.op, x, counter=counter)
    g = apply(prob.op, r, adjoint=True, counter=counter)
    diff = x - soft_threshold(x + g, prob.lam)
    return float(np.linalg.norm(diff) / max(np.linalg.norm(x), RESIDUAL_FLOOR))


def functional_value(prob, x, counter=None):
    """F_lam(x) = ||Kx - y||^2 + 2*lam*||x||_1.  Costs 1 matvec unit."""
    if prob.mode != "penalized":
        raise ValueError("functional value needs a penalized problem")
    x = np.asarray(x, dtype=np.float64)
    r = apply(prob.op, x, counter=counter) - prob.y
    return float(r @ r + 2.0 * prob.lam * np.abs(x).sum())


def lambda_of_rho(prob, x_tilde, counter=None):
    """Penalty parameter matching a constrained minimizer:
    max_i |(K^T(y - K x_tilde))_i|.

    Maps a point on the constrained path back to the penalized path; exact
    when x_tilde is the exact constrained minimizer.
    """
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    r = prob.y - apply(prob.op, x_tilde, counter=counter)
    return float(np.max(np.abs(apply(prob.op, r, adjoint=True, counter=counter))))

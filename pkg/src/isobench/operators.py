"""Dense test operators: construction, spectral surgery, normalization.

All constructions are deterministic functions of their arguments.  Random
entries come from numpy's PCG64 generator; normal variates use numpy's
ziggurat sampler (``Generator.standard_normal``).  Operators are immutable
after construction and safe to share across worker threads.
"""

import numpy as np

__all__ = [
    "CostCounter",
    "Operator",
    "SpectrumSpec",
    "apply",
    "gen_gaussian",
    "duplicate_columns",
    "replace_spectrum",
    "surrogate_spectrum",
    "normalize_spectral",
    "singular_values",
    "spectral_norm",
    "default_perturbation",
]


class CostCounter:
    """Monotone matvec clock: one application of K or K^T costs 1 unit."""

    __slots__ = ("units",)

    def __init__(self, units=0):
        self.units = int(units)

    def add(self, units=1):
        if units < 0:
            raise ValueError("cost units must be non-negative")
        self.units += units

    def __repr__(self):
        return f"CostCounter(units={self.units})"


def _as_readonly_f64(a, ndim):
    out = np.array(a, dtype=np.float64, order="C", copy=True)
    if out.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got {out.ndim}-d")
    if not np.all(np.isfinite(out)):
        raise ValueError("entries must be finite")
    out.flags.writeable = False
    return out


class Operator:
    """A dense m-by-p real matrix with optionally cached singular values.

    Parameters
    ----------
    entries : array_like, shape (m, p)
        Matrix entries; must be finite.
    singular_values : array_like or None
        Optional non-increasing, non-negative singular values of `entries`.
        Callers are responsible for consistency; constructors in this module
        only attach values they have actually computed.
    """

    __slots__ = ("entries", "singular_values")

    def __init__(self, entries, singular_values=None):
        entries = _as_readonly_f64(entries, 2)
        if entries.shape[0] < 1 or entries.shape[1] < 1:
            raise ValueError("operator must have at least one row and column")
        object.__setattr__(self, "entries", entries)
        if singular_values is not None:
            sv = _as_readonly_f64(singular_values, 1)
            if sv.shape[0] != min(entries.shape):
                raise ValueError("cached spectrum must have min(m, p) entries")
            if np.any(sv < 0) or np.any(np.diff(sv) > 0):
                raise ValueError("cached spectrum must be non-increasing and >= 0")
            singular_values = sv
        object.__setattr__(self, "singular_values", singular_values)

    def __setattr__(self, name, value):
        raise AttributeError("Operator is immutable")

    @property
    def m(self):
        return self.entries.shape[0]

    @property
    def p(self):
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    def __repr__(self):
        cached = "cached" if self.singular_values is not None else "no"
        return f"Operator({self.m}x{self.p}, spectrum: {cached})"


class SpectrumSpec:
    """Recipe for a singular-value sequence.

    kind is either ``"gaussian-native"`` (keep the spectrum of a Gaussian
    draw; `decades` is ignored) or ``"surrogate-illcond"`` (log-linear decay
    over `decades` decades, standing in for severely ill-conditioned
    operators whose true spectra are not available).
    """

    __slots__ = ("kind", "n", "decades", "top")

    KINDS = ("gaussian-native", "surrogate-illcond")

    def __init__(self, kind, n, decades=8.0, top=0.999):
        if kind not in self.KINDS:
            raise ValueError(f"unknown spectrum kind {kind!r}")
        if n < 1:
            raise ValueError("n must be >= 1")
        if decades < 0:
            raise ValueError("decades must be >= 0")
        if top <= 0:
            raise ValueError("top singular value must be positive")
        self.kind = kind
        self.n = int(n)
        self.decades = float(decades)
        self.top = float(top)


def apply(op, x, adjoint=False, counter=None):
    """Apply K (or K^T when `adjoint`) to x, charging 1 unit to `counter`.

    This is the only operation the budget clock meters; every solver matvec
    must go through it.
    """
    x = np.asarray(x, dtype=np.float64)
    n_in = op.m if adjoint else op.p
    if x.shape != (n_in,):
        raise ValueError(
            f"dimension mismatch: operator is {op.m}x{op.p}, "
            f"got input of shape {x.shape} with adjoint={adjoint}"
        )
    if counter is not None:
        counter.add(1)
    if adjoint:
        return op.entries.T @ x
    return op.entries @ x


def gen_gaussian(m, p, seed):
    """Draw an m-by-p operator with i.i.d. standard normal entries.

    Identical (m, p, seed) gives a bitwise identical operator.
    """
    if m < 1 or p < 1:
        raise ValueError("m and p must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    return Operator(rng.standard_normal((int(m), int(p))))


def default_perturbation(op):
    """Default magnitude for duplicate_columns: 1e-3 * ||K||_F / sqrt(m*p)."""
    return 1e-3 * np.linalg.norm(op.entries) / np.sqrt(op.m * op.p)


def duplicate_columns(op, j0, eps=None, seed=0):
    """Replace columns j0..p-1 by column j0, then add an eps-scaled Gaussian.

    With eps = 0 the trailing columns are bitwise copies of column j0 and no
    random numbers are drawn.  The result has a null space with many
    directions parallel to edges of the l1 ball.
    """
    if not 0 <= j0 < op.p:
        raise ValueError(f"column index {j0} out of range for p={op.p}")
    if eps is None:
        eps = default_perturbation(op)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    entries = op.entries.copy()
    entries[:, j0:] = entries[:, [j0]]
    if eps > 0:
        rng = np.random.Generator(np.random.PCG64(seed))
        entries += eps * rng.standard_normal(entries.shape)
    return Operator(entries)


def replace_spectrum(op, sigma):
    """Rebuild the operator with its singular values replaced by `sigma`.

    Computes the SVD U S V^T and returns U diag(sigma) V^T, preserving the
    singular subspaces.  `sigma` must be non-increasing, non-negative, and
    of length min(m, p); trailing zeros are permitted.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (min(op.m, op.p),):
        raise ValueError(
            f"need {min(op.m, op.p)} singular values, got {sigma.shape}"
        )
    if np.any(sigma < 0):
        raise ValueError("singular values must be >= 0")
    if np.any(np.diff(sigma) > 0):
        raise ValueError("singular values must be non-increasing")
    u, _, vt = np.linalg.svd(op.entries, full_matrices=False)
    return Operator((u * sigma) @ vt, singular_values=sigma)


def surrogate_spectrum(spec):
    """Log-linear singular-value decay: sigma_k = top * 10^(-decades*(k-1)/(n-1)).

    Stands in for operators that are known only to be severely
    ill-conditioned; the condition number is 10^decades.
    """
    if spec.n == 1:
        return np.array([spec.top])
    k = np.arange(spec.n, dtype=np.float64)
    return spec.top * 10.0 ** (-spec.decades * k / (spec.n - 1))


def singular_values(op):
    """Cached singular values if present, else a fresh SVD."""
    if op.singular_values is not None:
        return op.singular_values
    return np.linalg.svd(op.entries, compute_uv=False)


def spectral_norm(op):
    """Largest singular value."""
    return float(singular_values(op)[0])


def normalize_spectral(op, target):
    """Scale the operator so its largest singular value equals `target`.

    The full spectrum is computed once and cached on the result (scaling a
    matrix scales every singular value by the same factor).
    """
    if target <= 0:
        raise ValueError("target must be positive")
    sv = singular_values(op)
    s1 = float(sv[0])
    if s1 == 0.0:
        raise ValueError("cannot normalize the zero operator")
    scale = target / s1
    return Operator(scale * op.entries, singular_values=scale * sv)

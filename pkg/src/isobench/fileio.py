"""Binary persistence for operators and vectors.

Operator file layout (all little-endian):
  magic "L1OP" | version u32 = 1 | m u64 | p u64 | m*p float64 row-major
  | flag u8 | (if flag == 1) min(m, p) float64 singular values

Vector file layout:
  magic "L1VE" | n u64 | n float64

Round-trips are bitwise exact.
"""

import struct

import numpy as np

from .operators import Operator

__all__ = [
    "FileFormatError",
    "save_operator",
    "load_operator",
    "save_vector",
    "load_vector",
]

OPERATOR_MAGIC = b"L1OP"
VECTOR_MAGIC = b"L1VE"
OPERATOR_VERSION = 1

# Refuse headers that would demand absurd allocations (paper scale is ~1.5e7
# entries); also rejects zero dimensions.
MAX_ELEMENTS = 1 << 31


class FileFormatError(ValueError):
    """Raised for malformed operator/vector files."""


def _read_exact(f, nbytes, what):
    data = f.read(nbytes)
    if len(data) != nbytes:
        raise FileFormatError(f"truncated file: expected {nbytes} bytes of {what}")
    return data


def save_operator(op, path):
    """Write an operator (and its cached spectrum, if any) to `path`."""
    with open(path, "wb") as f:
        f.write(OPERATOR_MAGIC)
        f.write(struct.pack("<I", OPERATOR_VERSION))
        f.write(struct.pack("<QQ", op.m, op.p))
        f.write(np.ascontiguousarray(op.entries, dtype="<f8").tobytes())
        if op.singular_values is None:
            f.write(struct.pack("<B", 0))
        else:
            f.write(struct.pack("<B", 1))
            f.write(np.ascontiguousarray(op.singular_values, dtype="<f8").tobytes())


def load_operator(path):
    """Read an operator written by :func:`save_operator`."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != OPERATOR_MAGIC:
            raise FileFormatError(f"bad magic: expected {OPERATOR_MAGIC!r}, got {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != OPERATOR_VERSION:
            raise FileFormatError(f"unsupported operator file version {version}")
        m, p = struct.unpack("<QQ", _read_exact(f, 16, "dimensions"))
        if m < 1 or p < 1 or m * p > MAX_ELEMENTS:
            raise FileFormatError(f"dimension overflow: m={m}, p={p}")
        raw = _read_exact(f, 8 * m * p, "entries")
        entries = np.frombuffer(raw, dtype="<f8").reshape(m, p)
        (flag,) = struct.unpack("<B", _read_exact(f, 1, "spectrum flag"))
        sv = None
        if flag == 1:
            nsv = min(m, p)
            sv = np.frombuffer(_read_exact(f, 8 * nsv, "spectrum"), dtype="<f8")
        elif flag != 0:
            raise FileFormatError(f"bad spectrum flag {flag}")
    return Operator(entries, singular_values=sv)


def save_vector(x, path):
    """Write a 1-d float64 vector to `path`."""
    x = np.ascontiguousarray(x, dtype="<f8")
    if x.ndim != 1:
        raise ValueError("expected a 1-d vector")
    with open(path, "wb") as f:
        f.write(VECTOR_MAGIC)
        f.write(struct.pack("<Q", x.shape[0]))
        f.write(x.tobytes())


def load_vector(path):
    """Read a vector written by :func:`save_vector`."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != VECTOR_MAGIC:
            raise FileFormatError(f"bad magic: expected {VECTOR_MAGIC!r}, got {magic!r}")
        (n,) = struct.unpack("<Q", _read_exact(f, 8, "length"))
        if n < 1 or n > MAX_ELEMENTS:
            raise FileFormatError(f"dimension overflow: n={n}")
        data = _read_exact(f, 8 * n, "values")
    return np.frombuffer(data, dtype="<f8").copy()

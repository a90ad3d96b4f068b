import struct

import numpy as np
import pytest

from isobench.fileio import (
    FileFormatError,
    load_operator,
    load_vector,
    save_operator,
    save_vector,
)
from isobench.operators import gen_gaussian, normalize_spectral


def test_operator_roundtrip_bitwise(tmp_path):
    op = gen_gaussian(5, 7, seed=1)
    path = tmp_path / "op.l1op"
    save_operator(op, path)
    loaded = load_operator(path)
    assert np.array_equal(loaded.entries, op.entries)
    assert loaded.singular_values is None


def test_operator_roundtrip_with_spectrum(tmp_path):
    op = normalize_spectral(gen_gaussian(6, 4, seed=2), 0.999)
    path = tmp_path / "op.l1op"
    save_operator(op, path)
    loaded = load_operator(path)
    assert np.array_equal(loaded.entries, op.entries)
    assert np.array_equal(loaded.singular_values, op.singular_values)


def test_operator_bad_magic(tmp_path):
    path = tmp_path / "bad.l1op"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(FileFormatError, match="bad magic"):
        load_operator(path)


def test_operator_truncated(tmp_path):
    op = gen_gaussian(5, 7, seed=1)
    path = tmp_path / "op.l1op"
    save_operator(op, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(FileFormatError, match="truncated"):
        load_operator(path)


def test_operator_dimension_overflow(tmp_path):
    path = tmp_path / "huge.l1op"
    header = b"L1OP" + struct.pack("<I", 1) + struct.pack("<QQ", 1 << 40, 1 << 40)
    path.write_bytes(header + b"\x00" * 32)
    with pytest.raises(FileFormatError, match="dimension overflow"):
        load_operator(path)


def test_operator_zero_dimension_rejected(tmp_path):
    path = tmp_path / "zero.l1op"
    header = b"L1OP" + struct.pack("<I", 1) + struct.pack("<QQ", 0, 5)
    path.write_bytes(header + b"\x00" * 32)
    with pytest.raises(FileFormatError, match="dimension overflow"):
        load_operator(path)


def test_operator_bad_version(tmp_path):
    path = tmp_path / "v9.l1op"
    header = b"L1OP" + struct.pack("<I", 9) + struct.pack("<QQ", 1, 1)
    path.write_bytes(header + b"\x00" * 16)
    with pytest.raises(FileFormatError, match="version"):
        load_operator(path)


def test_vector_roundtrip_bitwise(tmp_path):
    rng = np.random.Generator(np.random.PCG64(3))
    x = rng.standard_normal(11)
    path = tmp_path / "x.l1ve"
    save_vector(x, path)
    assert np.array_equal(load_vector(path), x)


def test_vector_bad_magic(tmp_path):
    path = tmp_path / "bad.l1ve"
    path.write_bytes(b"XXXX" + struct.pack("<Q", 1) + b"\x00" * 8)
    with pytest.raises(FileFormatError, match="bad magic"):
        load_vector(path)


def test_vector_truncated(tmp_path):
    path = tmp_path / "short.l1ve"
    path.write_bytes(b"L1VE" + struct.pack("<Q", 4) + b"\x00" * 8)
    with pytest.raises(FileFormatError, match="truncated"):
        load_vector(path)

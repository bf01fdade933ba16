"""Binary tensor/Checkpoint formats."""

import struct

import numpy as np
import pytest

from vbforce.formats import (FormatError, read_checkpoint, read_tensor_file,
                             write_checkpoint, write_tensor_file)


def test_tensor_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = rng.uniform(-1, 1, (7, 4, 5, 3)).astype(np.float32).astype(float)
    path = tmp_path / "seq.stf.vbfs"
    write_tensor_file(path, tensors, list(range(10, 80, 10)))
    back, idx = read_tensor_file(path)
    assert np.array_equal(back, tensors)
    assert np.array_equal(idx, np.arange(10, 80, 10))


def test_tensor_file_header_layout(tmp_path):
    path = tmp_path / "t.vbfs"
    write_tensor_file(path, np.zeros((2, 3, 4, 5)), [0, 1])
    raw = path.read_bytes()
    assert raw[:4] == b"VBFS"
    version, h, w, c, count, reserved = struct.unpack("<HHHHIH", raw[4:18])
    assert (version, h, w, c, count, reserved) == (1, 3, 4, 5, 2, 0)
    assert len(raw) == 18 + 2 * 3 * 4 * 5 * 4


def test_tensor_file_bad_magic(tmp_path):
    path = tmp_path / "bad.vbfs"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(FormatError):
        read_tensor_file(path)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    arrays = {"w": rng.standard_normal((3, 4)), "b": rng.standard_normal(4),
              "scalarish": rng.standard_normal(1), "deep": rng.standard_normal((2, 3, 2))}
    path = tmp_path / "m.vbfp"
    write_checkpoint(path, arrays)
    back = read_checkpoint(path)
    assert list(back) == list(arrays)
    for k in arrays:
        assert np.array_equal(back[k], arrays[k])


def test_checkpoint_header(tmp_path):
    path = tmp_path / "m.vbfp"
    write_checkpoint(path, {"x": np.zeros((2, 2))})
    raw = path.read_bytes()
    assert raw[:4] == b"VBFP"
    version, count = struct.unpack("<HI", raw[4:10])
    assert version == 1 and count == 1


def test_checkpoint_truncated_rejected(tmp_path):
    path = tmp_path / "m.vbfp"
    write_checkpoint(path, {"x": np.ones(8)})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_checkpoint(path)

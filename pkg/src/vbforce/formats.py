"""Binary file formats for preprocessed tensors and parameter checkpoints.

Tensor files (magic ``VBFS``) hold a stack of equally shaped float32
tensors: header = magic(4) | version u16 | H u16 | W u16 | C u16 |
count u32 | reserved u16, all little-endian, followed by count*H*W*C
float32 values.  A CSV sidecar ``<name>.idx.csv`` maps each stored
tensor to the source frame index it was computed at.

Checkpoints (magic ``VBFP``) hold named float64 arrays: header =
magic(4) | version u16 | count u32, then per array: name length u16 |
name bytes | rank u8 | dims u32 each | float64 payload.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"VBFS"
CHECKPOINT_MAGIC = b"VBFP"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def write_tensor_file(path: Path, tensors: np.ndarray, source_indices) -> None:
    """Persist (count, H, W, C) float data plus its frame-index sidecar."""
    tensors = np.asarray(tensors)
    if tensors.ndim != 4:
        raise FormatError(f"expected (count,H,W,C), got shape {tensors.shape}")
    count, h, w, c = tensors.shape
    if len(source_indices) != count:
        raise FormatError("source index count does not match tensor count")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<HHHHIH", FORMAT_VERSION, h, w, c, count, 0))
        fh.write(tensors.astype("<f4").tobytes())
    with open(path.with_suffix(path.suffix + ".idx.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["frame_index", "source_t"])
        for i, t in enumerate(source_indices):
            wr.writerow([i, int(t)])


def read_tensor_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (tensors (count,H,W,C) float64, source indices (count,))."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TENSOR_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version, h, w, c, count, _ = struct.unpack("<HHHHIH", fh.read(14))
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = np.frombuffer(fh.read(count * h * w * c * 4), dtype="<f4")
    if payload.size != count * h * w * c:
        raise FormatError(f"{path}: truncated payload")
    idx_path = path.with_suffix(path.suffix + ".idx.csv")
    with open(idx_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    source = np.array([int(r["source_t"]) for r in rows], dtype=int)
    if len(source) != count:
        raise FormatError(f"{idx_path}: sidecar count mismatch")
    return payload.astype(np.float64).reshape(count, h, w, c), source


def write_checkpoint(path: Path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.astype("<f8").tobytes())


def read_checkpoint(path: Path) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version, count = struct.unpack("<HI", fh.read(6))
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", fh.read(1))
            dims = [struct.unpack("<I", fh.read(4))[0] for _ in range(rank)]
            size = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(fh.read(size * 8), dtype="<f8")
            if data.size != size:
                raise FormatError(f"{path}: truncated array {name}")
            arrays[name] = data.astype(np.float64).reshape(dims)
    return arrays

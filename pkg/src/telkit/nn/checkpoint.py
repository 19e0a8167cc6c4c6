"""TKW1 weight files: named f32 tensors, little-endian, atomic writes.

Layout: magic "TKW1", u32 tensor count, then per tensor u32 name length,
name bytes (utf-8), u32 rank, u32 extents, f32 row-major payload.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..data import DataError, atomic_write_bytes

MAGIC = b"TKW1"


class CheckpointError(DataError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        arr = np.require(value, dtype="<f4", requirements=["C"])  # keeps rank-0 shapes
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"non-finite values in tensor {name!r}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    atomic_write_bytes(Path(path), b"".join(parts))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a TKW1 file")
    view = memoryview(raw)
    pos = 4

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: truncated reading {what}")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4, "tensor count"))
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = struct.unpack("<I", take(4, f"name length of tensor {i}"))
        name = bytes(take(name_len, f"name of tensor {i}")).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, f"rank of {name!r}"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, f"extents of {name!r}"))
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = take(4 * size, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{path}: non-finite values in {name!r}")
        if name in out:
            raise CheckpointError(f"{path}: duplicate tensor name {name!r}")
        out[name] = arr
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return out

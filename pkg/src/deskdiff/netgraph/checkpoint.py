"""Binary checkpoint format.

Layout (all integers unsigned little-endian, all values little-endian
float64)::

    magic      8 bytes   b"DESKDIFF"
    version    u32       FORMAT_VERSION
    kind       u32 length + UTF-8     e.g. "denoiser", "autoencoder"
    metadata   u32 length + UTF-8 JSON (sorted keys)
    count      u32       number of arrays
    per array: u32 name length + UTF-8 name, u32 ndim, ndim x u64 extents,
               prod(extents) x f64 values (C order)

Arrays are written in sorted-name order, so identical contents produce
identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DESKDIFF"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _blob(b: bytes) -> bytes:
    return struct.pack("<I", len(b)) + b


def dumps(kind: str, metadata: dict, arrays: dict) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), _blob(kind.encode()),
             _blob(json.dumps(metadata, sort_keys=True).encode()),
             struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        parts.append(_blob(name.encode()))
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def loads(data: bytes, expect_kind: str | None = None):
    """Parse checkpoint bytes into ``(kind, metadata, arrays)``."""
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    def u32():
        return struct.unpack("<I", take(4))[0]

    if bytes(take(len(MAGIC))) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}; expected {FORMAT_VERSION}")
    kind = bytes(take(u32())).decode()
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"expected a {expect_kind!r} checkpoint, found {kind!r}")
    metadata = json.loads(bytes(take(u32())).decode())
    arrays = {}
    for _ in range(u32()):
        name = bytes(take(u32())).decode()
        ndim = u32()
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        count = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(view):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return kind, metadata, arrays


def save_checkpoint(path, kind: str, metadata: dict, arrays: dict) -> None:
    Path(path).write_bytes(dumps(kind, metadata, arrays))


def load_checkpoint(path, expect_kind: str | None = None):
    return loads(Path(path).read_bytes(), expect_kind)

"""Binary parameter files.

Layout, all integers little-endian::

    b"PSWPCKPT"            magic
    u32 version            currently 1
    u32 record count
    per record:
        u16 name length, name (utf-8)
        u8 ndim, u32 * ndim shape
        float32 values (little-endian, C order)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PSWPCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, state: dict):
    parts = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    if buf[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    state = {}
    for _ in range(count):
        (n,) = take("<H")
        name = bytes(take(f"<{n}s")[0]).decode("utf-8")
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        if pos + 4 * size > len(buf):
            raise CheckpointError(f"{path}: truncated in record {name!r}")
        state[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
        pos += 4 * size
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return state

"""Binary parameter checkpoints.

Layout (all little-endian)::

    b"DCKP"  version:u8  count:u32
    repeated count times:
        name_len:u16  name:utf-8  ndim:u8  dims:u32 * ndim  data:f64 * prod(dims)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_params(path, params) -> None:
    """Write ``params`` (Parameters or ``(name, array)`` pairs) to ``path``."""
    records = []
    for p in params:
        name, arr = (p.name, p.data) if hasattr(p, "data") else p
        records.append((name, np.array(arr, dtype="<f8", order="C")))  # keeps 0-d shape
    out = bytearray(MAGIC)
    out += struct.pack("<BI", VERSION, len(records))
    for name, arr in records:
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def load_params(path) -> list:
    """Read a checkpoint into a list of ``(name, float64 array)``."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a parameter checkpoint")
    version, count = struct.unpack_from("<BI", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = 9
    out = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + n].decode("utf-8")
            off += n
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            dims = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            size = int(np.prod(dims)) if ndim else 1
            arr = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(dims).astype(np.float64)
            off += 8 * size
            out.append((name, arr))
    except (struct.error, ValueError) as exc:  # short header or short data block
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    return out

"""Versioned binary checkpoint container.

Layout (all integers little-endian, documented here and in the README):

    bytes 0..7    magic b"SNAVCKPT"
    u32           format version (currently 1)
    u32           metadata length M, followed by M bytes of UTF-8 JSON
                  (layer LIF configs, shapes, arbitrary extra info)
    u32           tensor count N
    per tensor:
        u16       name length L, followed by L bytes UTF-8 name
        u8        ndim, then ndim x u32 dims
        f32 LE    C-order tensor data

Tensors are stored as 32-bit floats regardless of in-memory dtype.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SNAVCKPT"
VERSION = 1


def save_checkpoint(path, tensors: dict, metadata: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta_bytes = json.dumps(metadata or {}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            name_b = name.encode()
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.astype("<f4", copy=False).tobytes())


def load_checkpoint(path):
    """Returns (tensors dict of float32 arrays, metadata dict)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path} is not a spikenav checkpoint (bad magic)")
    off = 8
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<I", data, off)
    off += 4
    metadata = json.loads(data[off:off + meta_len].decode())
    off += meta_len
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + name_len].decode()
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off) if ndim else ()
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        tensors[name] = arr.copy()
    return tensors, metadata


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

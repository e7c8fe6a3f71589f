"""Binary checkpoint format: magic + version + JSON metadata + named tensors.

Payloads are raw little-endian; reload is bit-exact.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"FDMNCKPT"
VERSION = 1

_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8"}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


def save_tensors(path: str, tensors: dict[str, np.ndarray], meta: dict | None = None):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
        f.write(struct.pack("<I", len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name])
            if arr.dtype not in _CODES:
                raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    os.replace(tmp, path)


def load_tensors(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(meta_len).decode())
        (count,) = struct.unpack("<I", f.read(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode()
            code, ndim = struct.unpack("<BB", f.read(2))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            dt = np.dtype(_DTYPES[code])
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            tensors[name] = np.frombuffer(f.read(n_bytes), dtype=dt).reshape(shape).copy()
    return tensors, meta

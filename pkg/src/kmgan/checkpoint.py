"""Versioned binary checkpoint container.

Layout: magic "KMG1", u32 record count, then per record
u32 name length | name (utf-8) | u32 ndim | u32 dims... | float64 values,
all little-endian. Metadata (architectures, mode, dims) rides along as a
JSON record whose bytes are stored one-per-float64.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"KMG1"
META_KEY = "__meta__"


class CheckpointError(ValueError):
    pass


def save_records(path, records: dict) -> None:
    """records: name -> 0/1/2-D float64 array."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(records)))
        for name, arr in records.items():
            arr = np.asarray(arr, dtype="<f8")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())


def load_records(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    pos = 4

    def take(fmt, size):
        nonlocal pos
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        out = struct.unpack_from(fmt, blob, pos)
        pos += size
        return out

    (count,) = take("<I", 4)
    records = {}
    for _ in range(count):
        (name_len,) = take("<I", 4)
        if pos + name_len > len(blob):
            raise CheckpointError("truncated checkpoint")
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<I", 4)
        shape = tuple(take("<I", 4)[0] for _ in range(ndim))
        n_values = int(np.prod(shape)) if shape else 1
        nbytes = 8 * n_values
        if pos + nbytes > len(blob):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(blob[pos : pos + nbytes], dtype="<f8").astype(np.float64)
        pos += nbytes
        records[name] = arr.reshape(shape)
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last record")
    return records


def pack_meta(meta: dict) -> np.ndarray:
    raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float64)


def unpack_meta(arr: np.ndarray) -> dict:
    raw = bytes(np.asarray(arr).astype(np.uint8).tolist())
    return json.loads(raw.decode("utf-8"))

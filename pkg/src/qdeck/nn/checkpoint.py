"""Versioned binary model checkpoints.

Layout: magic, JSON architecture header, then a flat parameter table of
(name, shape, float32 values) entries, all little-endian.  Round trips of
float32 state are value-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

CHECKPOINT_MAGIC = b"QDECKNN\x01"


class CheckpointFormatError(Exception):
    pass


def save_checkpoint(path, arch: dict, state: dict[str, np.ndarray]) -> None:
    header = json.dumps(arch, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            # asarray keeps 0-d shapes (ascontiguousarray would force ndim >= 1)
            arr = np.asarray(state[name], dtype="<f4")
            if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointFormatError(f"{path}: bad magic / version")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    arch = json.loads(blob[off:off + hlen].decode("utf-8"))
    off += hlen
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        state[name] = np.array(arr, dtype=np.float32)
    if off != len(blob):
        raise CheckpointFormatError(f"{path}: trailing bytes after parameter table")
    return arch, state

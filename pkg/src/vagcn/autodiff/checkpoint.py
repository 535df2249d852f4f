"""VAGW weight files.

Layout (little-endian): b"VAGW", u32 version (=1), u32 tensor count, then per
tensor: u32 name length, UTF-8 name, u8 rank, rank x u32 extents, f32 payload.
"""
from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from ..errors import LengthError, MagicError, VersionError

MAGIC = b"VAGW"
VERSION = 1


def write_weights(dest, tensors: dict[str, np.ndarray]) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            write_weights(fh, tensors)
        return
    dest.write(MAGIC)
    dest.write(struct.pack("<II", VERSION, len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        dest.write(struct.pack("<I", len(raw)))
        dest.write(raw)
        dest.write(struct.pack("<B", arr.ndim))
        dest.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        dest.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(src: BinaryIO, n: int, what: str) -> bytes:
    buf = src.read(n)
    if len(buf) != n:
        raise LengthError(f"truncated weight file while reading {what}")
    return buf


def read_weights(src) -> dict[str, np.ndarray]:
    if isinstance(src, (str, Path)):
        with open(src, "rb") as fh:
            return read_weights(fh)
    if isinstance(src, (bytes, bytearray)):
        return read_weights(io.BytesIO(src))
    magic = src.read(4)
    if magic != MAGIC:
        raise MagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<II", _read_exact(src, 8, "header"))
    if version != VERSION:
        raise VersionError(f"unsupported weight file version {version}")
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", _read_exact(src, 4, "name length"))
        name = _read_exact(src, nlen, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", _read_exact(src, 1, "rank"))
        shape = struct.unpack(f"<{rank}I", _read_exact(src, 4 * rank, "extents"))
        n = int(np.prod(shape, dtype=np.int64))
        payload = _read_exact(src, 4 * n, f"payload of {name}")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    if src.read(1):
        raise LengthError("trailing bytes after last tensor")
    return out

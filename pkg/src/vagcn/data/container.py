"""VAPC binary point-cloud datasets.

Header (little-endian): b"VAPC", u32 version (=1), u32 sample count S,
u32 points per sample N, u32 extra channels E, u32 num classes. The top bit
of the num-classes word marks a part-segmentation file.

Per sample: f32 positions (N x 3), f32 extras (N x E), then either a u16
class label, or (segmentation) a u16 object category followed by N u16 part
labels.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import LabelError, LengthError, MagicError, VersionError

MAGIC = b"VAPC"
VERSION = 1
SEG_FLAG = 0x8000_0000
HEADER = struct.Struct("<4sIIIII")


@dataclass
class DatasetContainer:
    points: np.ndarray                  # (S, N, 3) float32
    labels: np.ndarray                  # (S,) or (S, N) uint16
    num_classes: int
    extras: np.ndarray | None = None    # (S, N, E) float32
    categories: np.ndarray | None = None  # (S,) uint16, segmentation only
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float32)
        s, n, _ = self.points.shape
        if self.extras is None:
            self.extras = np.zeros((s, n, 0), dtype=np.float32)
        self.extras = np.asarray(self.extras, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint16)
        if self.segmentation and self.categories is None:
            self.categories = np.zeros(s, dtype=np.uint16)
        if self.categories is not None:
            self.categories = np.asarray(self.categories, dtype=np.uint16)

    @property
    def segmentation(self) -> bool:
        return self.labels.ndim == 2

    @property
    def num_samples(self) -> int:
        return self.points.shape[0]

    @property
    def num_points(self) -> int:
        return self.points.shape[1]

    @property
    def num_extras(self) -> int:
        return self.extras.shape[2]

    def inputs(self) -> np.ndarray:
        """Positions with extra channels appended, (S, N, 3 + E)."""
        if self.num_extras == 0:
            return self.points
        return np.concatenate([self.points, self.extras], axis=-1)

    def subset(self, index) -> "DatasetContainer":
        return DatasetContainer(self.points[index], self.labels[index], self.num_classes,
                                self.extras[index],
                                None if self.categories is None else self.categories[index],
                                list(self.class_names))


def _record_dtype(n: int, e: int, segmentation: bool) -> np.dtype:
    fields = [("pos", "<f4", (n, 3))]
    if e:
        fields.append(("ext", "<f4", (n, e)))
    if segmentation:
        fields += [("cat", "<u2"), ("parts", "<u2", (n,))]
    else:
        fields.append(("label", "<u2"))
    return np.dtype(fields)


def to_bytes(ds: DatasetContainer) -> bytes:
    s, n, e = ds.num_samples, ds.num_points, ds.num_extras
    if ds.labels.size and int(ds.labels.max()) >= ds.num_classes:
        raise LabelError(f"label {int(ds.labels.max())} >= num classes {ds.num_classes}")
    word = ds.num_classes | (SEG_FLAG if ds.segmentation else 0)
    rec = np.zeros(s, dtype=_record_dtype(n, e, ds.segmentation))
    rec["pos"] = ds.points
    if e:
        rec["ext"] = ds.extras
    if ds.segmentation:
        rec["cat"] = ds.categories
        rec["parts"] = ds.labels
    else:
        rec["label"] = ds.labels
    return HEADER.pack(MAGIC, VERSION, s, n, e, word) + rec.tobytes()


def from_bytes(buf: bytes) -> DatasetContainer:
    if len(buf) < HEADER.size:
        if buf[:4] != MAGIC[: len(buf[:4])]:
            raise MagicError(f"bad magic {buf[:4]!r}")
        raise LengthError(f"file shorter than the {HEADER.size}-byte header")
    magic, version, s, n, e, word = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise MagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionError(f"unsupported container version {version}")
    segmentation = bool(word & SEG_FLAG)
    num_classes = word & ~SEG_FLAG
    dt = _record_dtype(n, e, segmentation)
    expected = HEADER.size + s * dt.itemsize
    if len(buf) != expected:
        raise LengthError(f"payload is {len(buf)} bytes, header implies {expected}")
    rec = np.frombuffer(buf, dtype=dt, count=s, offset=HEADER.size)
    labels = rec["parts"] if segmentation else rec["label"]
    if labels.size and int(labels.max()) >= num_classes:
        raise LabelError(f"label {int(labels.max())} >= num classes {num_classes}")
    extras = rec["ext"].copy() if e else None
    cats = rec["cat"].copy() if segmentation else None
    return DatasetContainer(rec["pos"].copy(), labels.copy(), num_classes, extras, cats)


def write_container(dest, ds: DatasetContainer) -> None:
    data = to_bytes(ds)
    if isinstance(dest, (str, Path)):
        Path(dest).write_bytes(data)
    else:
        dest.write(data)


def read_container(src) -> DatasetContainer:
    if isinstance(src, (str, Path)):
        return from_bytes(Path(src).read_bytes())
    if isinstance(src, (bytes, bytearray)):
        return from_bytes(bytes(src))
    return from_bytes(src.read())

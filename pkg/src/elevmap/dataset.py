"""Binary dataset shards and heightfield files.

Shard layout (all integers and floats little-endian):

    header:  magic 'NDEM' | version u32 | resolution f32 | H u32 | W u32 | count u32
    record:  x 7*H*W f32 | y_h H*W f32 | y_e H*W u8 | observed H*W u8
             | pose 6*f64 | observation_rate f32

The header is 24 bytes (six 4-byte fields); records are densely packed in
declared field order with no padding, so a record is 34*H*W + 52 bytes and
any record can be addressed by offset. Writing the same records twice
produces byte-identical files on any platform.

Heightfield layout:

    'NDHF' | version u32 | H u32 | W u32 | resolution f64
           | origin_x f64 | origin_y f64 | heights H*W f64
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError
from .terrain import HeightField

SHARD_MAGIC = b"NDEM"
SHARD_VERSION = 1
_HEADER_FMT = "<4sIfIII"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)  # 24 bytes

FIELD_MAGIC = b"NDHF"
FIELD_VERSION = 1
_FIELD_HEADER_FMT = "<4sIIIddd"

DEFAULT_MIN_RATE = 0.25


def filter_frame(observation_rate: float, threshold: float = DEFAULT_MIN_RATE) -> bool:
    """Keep a frame iff its observation rate reaches the threshold (inclusive)."""
    return observation_rate >= threshold


def record_nbytes(h: int, w: int) -> int:
    return 34 * h * w + 52


@dataclass
class DatasetRecord:
    """One training/evaluation sample.

    x: (7, H, W) float32 feature tensor; height: (H, W) float32 ground truth
    in meters; edge: (H, W) uint8 binary ground-truth edges; observed:
    (H, W) uint8 observation mask; pose: 6 float64 sensor pose
    (x, y, z, roll, pitch, yaw); rate: observation rate in [0, 1].
    """

    x: np.ndarray
    height: np.ndarray
    edge: np.ndarray
    observed: np.ndarray
    pose: np.ndarray
    rate: float

    def validate(self) -> "DatasetRecord":
        x = np.ascontiguousarray(self.x, dtype="<f4")
        if x.ndim != 3 or x.shape[0] != 7:
            raise DataError(f"x must be (7, H, W), got {x.shape}")
        h, w = x.shape[1:]
        height = np.ascontiguousarray(self.height, dtype="<f4")
        edge = np.ascontiguousarray(self.edge, dtype=np.uint8)
        observed = np.ascontiguousarray(self.observed, dtype=np.uint8)
        pose = np.ascontiguousarray(self.pose, dtype="<f8").reshape(6)
        for name, arr in (("height", height), ("edge", edge), ("observed", observed)):
            if arr.shape != (h, w):
                raise DataError(f"{name} shape {arr.shape} does not match x {(h, w)}")
        if not 0.0 <= float(self.rate) <= 1.0:
            raise DataError(f"observation rate must be in [0, 1], got {self.rate}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(height)) and np.all(np.isfinite(pose))):
            raise DataError("record contains non-finite values")
        if edge.max(initial=0) > 1 or observed.max(initial=0) > 1:
            raise DataError("edge and observed grids must be binary")
        return DatasetRecord(x, height, edge, observed, pose, float(self.rate))

    def tobytes(self) -> bytes:
        r = self.validate()
        return b"".join(
            (
                r.x.tobytes(),
                r.height.tobytes(),
                r.edge.tobytes(),
                r.observed.tobytes(),
                r.pose.tobytes(),
                struct.pack("<f", r.rate),
            )
        )

    @classmethod
    def frombytes(cls, buf: bytes, h: int, w: int) -> "DatasetRecord":
        if len(buf) != record_nbytes(h, w):
            raise DataError(f"record buffer has {len(buf)} bytes, expected {record_nbytes(h, w)}")
        hw = h * w
        off = 0
        x = np.frombuffer(buf, dtype="<f4", count=7 * hw, offset=off).reshape(7, h, w)
        off += 4 * 7 * hw
        height = np.frombuffer(buf, dtype="<f4", count=hw, offset=off).reshape(h, w)
        off += 4 * hw
        edge = np.frombuffer(buf, dtype=np.uint8, count=hw, offset=off).reshape(h, w)
        off += hw
        observed = np.frombuffer(buf, dtype=np.uint8, count=hw, offset=off).reshape(h, w)
        off += hw
        pose = np.frombuffer(buf, dtype="<f8", count=6, offset=off)
        off += 48
        (rate,) = struct.unpack_from("<f", buf, off)
        return cls(x.copy(), height.copy(), edge.copy(), observed.copy(), pose.copy(), float(rate))


def _pack_header(resolution: float, h: int, w: int, count: int) -> bytes:
    return struct.pack(_HEADER_FMT, SHARD_MAGIC, SHARD_VERSION, float(resolution), h, w, count)


def _parse_header(buf: bytes):
    if len(buf) < HEADER_SIZE:
        raise DataError(f"shard header truncated: {len(buf)} bytes")
    magic, version, resolution, h, w, count = struct.unpack_from(_HEADER_FMT, buf)
    if magic != SHARD_MAGIC:
        raise DataError(f"bad shard magic {magic!r}")
    if version != SHARD_VERSION:
        raise DataError(f"unsupported shard version {version}")
    return float(resolution), int(h), int(w), int(count)


class ShardWriter:
    """Streaming shard writer that drops records below the rate threshold.

    The record count is patched into the header on close, so interrupted
    runs leave a consistent file of however many records made it.
    """

    def __init__(self, path, resolution: float, h: int, w: int, min_rate: float = DEFAULT_MIN_RATE):
        self.path = path
        self.resolution = float(resolution)
        self.h, self.w = int(h), int(w)
        self.min_rate = float(min_rate)
        self.kept = 0
        self.dropped = 0
        self._fh = open(path, "wb")
        self._fh.write(_pack_header(self.resolution, self.h, self.w, 0))

    def add(self, record: DatasetRecord) -> bool:
        """Append a record; returns False (and writes nothing) when filtered out."""
        if not filter_frame(record.rate, self.min_rate):
            self.dropped += 1
            return False
        r = record.validate()
        if r.x.shape[1:] != (self.h, self.w):
            raise DataError(f"record shape {r.x.shape[1:]} does not match shard {(self.h, self.w)}")
        self._fh.write(r.tobytes())
        self.kept += 1
        return True

    def close(self):
        if self._fh is None:
            return
        self._fh.seek(0)
        self._fh.write(_pack_header(self.resolution, self.h, self.w, self.kept))
        self._fh.close()
        self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_shard(records, path, resolution: float, h: int | None = None, w: int | None = None):
    """Write records densely after a header; zero records gives a header-only file."""
    records = list(records)
    if records:
        first = records[0].validate()
        h, w = first.x.shape[1:]
    if h is None or w is None:
        raise DataError("h and w are required for an empty shard")
    with open(path, "wb") as fh:
        fh.write(_pack_header(resolution, h, w, len(records)))
        for rec in records:
            r = rec.validate()
            if r.x.shape[1:] != (h, w):
                raise DataError("records in one shard must share a shape")
            fh.write(r.tobytes())


class ShardReader:
    """Random access over a shard by record index."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "rb")
        self.resolution, self.h, self.w, self.count = _parse_header(self._fh.read(HEADER_SIZE))
        self._rec_size = record_nbytes(self.h, self.w)

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, idx: int) -> DatasetRecord:
        if not 0 <= idx < self.count:
            raise IndexError(f"record {idx} out of range ({self.count} records)")
        self._fh.seek(HEADER_SIZE + idx * self._rec_size)
        return DatasetRecord.frombytes(self._fh.read(self._rec_size), self.h, self.w)

    def __iter__(self):
        for i in range(self.count):
            yield self[i]

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_shard(path) -> list[DatasetRecord]:
    with ShardReader(path) as reader:
        return list(reader)


def write_heightfield(field: HeightField, path):
    """Serialize a heightfield; identical inputs give byte-identical files."""
    h, w = field.heights.shape
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                _FIELD_HEADER_FMT,
                FIELD_MAGIC,
                FIELD_VERSION,
                h,
                w,
                field.resolution,
                field.origin[0],
                field.origin[1],
            )
        )
        fh.write(np.ascontiguousarray(field.heights, dtype="<f8").tobytes())


def read_heightfield(path) -> HeightField:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize(_FIELD_HEADER_FMT))
        if len(head) < struct.calcsize(_FIELD_HEADER_FMT):
            raise DataError("heightfield header truncated")
        magic, version, h, w, res, ox, oy = struct.unpack(_FIELD_HEADER_FMT, head)
        if magic != FIELD_MAGIC:
            raise DataError(f"bad heightfield magic {magic!r}")
        if version != FIELD_VERSION:
            raise DataError(f"unsupported heightfield version {version}")
        raw = fh.read(8 * h * w)
        if len(raw) != 8 * h * w:
            raise DataError("heightfield data truncated")
        data = np.frombuffer(raw, dtype="<f8")
        return HeightField(heights=data.reshape(h, w).copy(), resolution=res, origin=(ox, oy))

"""Reader/writer for the elevation feature shard format.

This package consumes shards produced by the mapping engine through its
documented byte layout (all little-endian):

    header:  magic 'NDEM' | version u32 | resolution f32 | H u32 | W u32 | count u32
    record:  x 7*H*W f32 | y_h H*W f32 | y_e H*W u8 | observed H*W u8
             | pose 6*f64 | observation_rate f32

The feature tensor's height channels are relative to the record's reference
plane (pose z minus the 0.5 m sensor mount); y_h is absolute meters.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"NDEM"
VERSION = 1
_HEADER_FMT = "<4sIfIII"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)
MOUNT_HEIGHT = 0.50


class ShardError(ValueError):
    pass


@dataclass
class Record:
    x: np.ndarray          # (7, H, W) float32
    height: np.ndarray     # (H, W) float32, absolute meters
    edge: np.ndarray       # (H, W) uint8
    observed: np.ndarray   # (H, W) uint8
    pose: np.ndarray       # (6,) float64
    rate: float

    @property
    def reference(self) -> float:
        """Ground elevation under the sensor; height channels in x and the
        service's outputs are relative to this plane."""
        return float(self.pose[2]) - MOUNT_HEIGHT

    def height_relative(self) -> np.ndarray:
        return self.height.astype(np.float32) - np.float32(self.reference)


def record_nbytes(h: int, w: int) -> int:
    return 34 * h * w + 52


def read_shard(path) -> tuple[list[Record], float]:
    """All records plus the shard's grid resolution."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE:
            raise ShardError("shard header truncated")
        magic, version, resolution, h, w, count = struct.unpack(_HEADER_FMT, head)
        if magic != MAGIC:
            raise ShardError(f"bad shard magic {magic!r}")
        if version != VERSION:
            raise ShardError(f"unsupported shard version {version}")
        hw = h * w
        rec_size = record_nbytes(h, w)
        records = []
        for _ in range(count):
            buf = fh.read(rec_size)
            if len(buf) != rec_size:
                raise ShardError("shard record truncated")
            off = 0
            x = np.frombuffer(buf, dtype="<f4", count=7 * hw, offset=off).reshape(7, h, w)
            off += 28 * hw
            height = np.frombuffer(buf, dtype="<f4", count=hw, offset=off).reshape(h, w)
            off += 4 * hw
            edge = np.frombuffer(buf, dtype=np.uint8, count=hw, offset=off).reshape(h, w)
            off += hw
            observed = np.frombuffer(buf, dtype=np.uint8, count=hw, offset=off).reshape(h, w)
            off += hw
            pose = np.frombuffer(buf, dtype="<f8", count=6, offset=off)
            off += 48
            (rate,) = struct.unpack_from("<f", buf, off)
            records.append(Record(x.copy(), height.copy(), edge.copy(),
                                  observed.copy(), pose.copy(), float(rate)))
    return records, float(resolution)


def write_shard(records: list[Record], path, resolution: float):
    """Writer for fixtures and tooling; byte-compatible with the engine."""
    if records:
        h, w = records[0].x.shape[1:]
    else:
        raise ShardError("refusing to write an empty fixture shard")
    with open(path, "wb") as fh:
        fh.write(struct.pack(_HEADER_FMT, MAGIC, VERSION, float(resolution), h, w, len(records)))
        for rec in records:
            if rec.x.shape != (7, h, w):
                raise ShardError("records in one shard must share a shape")
            fh.write(np.ascontiguousarray(rec.x, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(rec.height, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(rec.edge, dtype=np.uint8).tobytes())
            fh.write(np.ascontiguousarray(rec.observed, dtype=np.uint8).tobytes())
            fh.write(np.ascontiguousarray(rec.pose, dtype="<f8").tobytes())
            fh.write(struct.pack("<f", float(rec.rate)))

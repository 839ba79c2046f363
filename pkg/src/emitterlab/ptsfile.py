"""PTS1 timestamp file format.

Bit-exact layout: bytes 0-3 magic ``PTS1``; bytes 4-7 little-endian u32
version = 1; bytes 8-15 little-endian u64 event count N; then N
little-endian u64 timestamps in picoseconds, strictly increasing.
"""

from __future__ import annotations

import struct

import numpy as np

from .photostream import TimestampChannel

MAGIC = b"PTS1"
VERSION = 1

__all__ = ["write_pts", "read_pts"]


def write_pts(path, channel: TimestampChannel) -> None:
    ts = np.asarray(channel.timestamps, dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", ts.size))
        fh.write(ts.tobytes())


def read_pts(path, duration=None, label="") -> TimestampChannel:
    """Read and validate a PTS1 file.

    `duration` defaults to the last timestamp.  Raises ValueError on a bad
    magic, version, truncated payload or non-increasing timestamps.
    """
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16 or head[:4] != MAGIC:
            raise ValueError(f"{path}: not a PTS1 file")
        (version,) = struct.unpack("<I", head[4:8])
        if version != VERSION:
            raise ValueError(f"{path}: unsupported PTS version {version}")
        (count,) = struct.unpack("<Q", head[8:16])
        payload = fh.read(8 * count)
        if len(payload) != 8 * count:
            raise ValueError(f"{path}: truncated payload")
    ts = np.frombuffer(payload, dtype="<u8").astype(np.int64)
    if ts.size and np.any(np.diff(ts) <= 0):
        raise ValueError(f"{path}: timestamps not strictly increasing")
    if duration is None:
        duration = int(ts[-1]) if ts.size else 0
    return TimestampChannel(timestamps=ts, duration=int(duration), label=label)

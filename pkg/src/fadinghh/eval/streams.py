"""Synthetic zipfian streams and the on-disk stream format.

Binary stream files are a 16-byte header (``b"FDST"``, version u16, 2 pad
bytes, record count u64) followed by fixed records ``(item u64, timestamp
f64)``, all little-endian.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

STREAM_MAGIC = b"FDST"
STREAM_VERSION = 1
_HEADER = struct.Struct("<4sH2xQ")
RECORD = np.dtype([("item", "<u8"), ("timestamp", "<f8")])

ARRIVALS = ("index", "poisson")


class Stream(NamedTuple):
    items: np.ndarray
    timestamps: np.ndarray

    def __len__(self):
        return self.items.shape[0]


@dataclass(frozen=True)
class ZipfStreamSpec:
    """``n`` draws from items ``1..m`` with probability proportional to ``rank**-rho``.

    Timestamps are the record index (``arrivals="index"``) or a unit-rate
    Poisson process starting at 0.
    """

    n: int
    m: int
    rho: float
    seed: int = 0
    arrivals: str = "index"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"universe size must be positive, got {self.m}")
        if self.n < 0:
            raise ValueError(f"stream length must be non-negative, got {self.n}")
        if not self.rho > 0:
            raise ValueError(f"skew must be positive, got {self.rho}")
        if self.arrivals not in ARRIVALS:
            raise ValueError(f"arrivals must be one of {ARRIVALS}, got {self.arrivals!r}")


def zipf_pmf(m: int, rho: float) -> np.ndarray:
    weights = np.arange(1, m + 1, dtype=np.float64) ** -rho
    return weights / weights.sum()


def generate(spec: ZipfStreamSpec) -> Stream:
    rng = np.random.default_rng(spec.seed)
    cdf = np.cumsum(zipf_pmf(spec.m, spec.rho))
    ranks = np.searchsorted(cdf, rng.random(spec.n) * cdf[-1], side="right")
    items = (np.minimum(ranks, spec.m - 1) + 1).astype(np.uint64)
    if spec.arrivals == "index":
        ts = np.arange(spec.n, dtype=np.float64)
    else:
        gaps = rng.exponential(1.0, spec.n)
        ts = np.concatenate(([0.0], np.cumsum(gaps[:-1]))) if spec.n else np.empty(0)
    return Stream(items, ts)


def to_bytes(stream: Stream) -> bytes:
    records = np.empty(len(stream), dtype=RECORD)
    records["item"] = stream.items
    records["timestamp"] = stream.timestamps
    return _HEADER.pack(STREAM_MAGIC, STREAM_VERSION, len(stream)) + records.tobytes()


def from_bytes(data: bytes) -> Stream:
    if len(data) < _HEADER.size:
        raise ValueError("truncated stream header")
    magic, version, n = _HEADER.unpack_from(data)
    if magic != STREAM_MAGIC or version != STREAM_VERSION:
        raise ValueError(f"not a stream file (magic {magic!r}, version {version})")
    if len(data) != _HEADER.size + n * RECORD.itemsize:
        raise ValueError(f"stream of {n} records has wrong size {len(data)}")
    records = np.frombuffer(data, dtype=RECORD, offset=_HEADER.size)
    return Stream(records["item"].astype(np.uint64), records["timestamp"].astype(np.float64))


def save(path: str | Path, stream: Stream) -> None:
    Path(path).write_bytes(to_bytes(stream))


def load(path: str | Path) -> Stream:
    """Load a binary stream file, or a CSV of ``item,timestamp`` rows if the name ends in .csv."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_csv(path)
    return from_bytes(path.read_bytes())


def load_csv(path: str | Path) -> Stream:
    items, ts = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                item, t = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: expected item,timestamp") from None
            items.append(item)
            ts.append(t)
    return Stream(np.array(items, dtype=np.uint64), np.array(ts, dtype=np.float64))

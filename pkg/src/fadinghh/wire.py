"""Binary sketch format.

Layout (little-endian)::

    header      see ``_HEADER`` below
    cells       d * w * 2 counters, row-major, each (item u64, freq f64)
    crc32       u32 over header + cells
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .decay import DecaySpec
from .sketch import Sketch, SketchConfig

MAGIC = b"FDCS"
VERSION = 1

# magic, version, decay kind, d, w, seed, decay rate, landmark, scale epoch,
# local count, max timestamp, epsilon, delta, phi, width override, depth override
_HEADER = struct.Struct("<4sHBxIIQddqddddd II")
_CRC = struct.Struct("<I")
_COUNTER = np.dtype([("item", "<u8"), ("freq", "<f8")])


class FormatError(ValueError):
    pass


def serialize(sketch: Sketch) -> bytes:
    cfg = sketch.config
    decay = cfg.decay
    header = _HEADER.pack(
        MAGIC, VERSION, decay.kind_code, sketch.d, sketch.w, cfg.seed,
        decay.rate, decay.landmark, sketch.scale_epoch, sketch.local_count,
        sketch.max_timestamp, cfg.epsilon, cfg.delta, cfg.phi,
        cfg.width or 0, cfg.depth or 0,
    )
    cells = np.empty(sketch.d * sketch.w * 2, dtype=_COUNTER)
    cells["item"] = sketch.items.reshape(-1)
    cells["freq"] = sketch.freqs.reshape(-1)
    body = header + cells.tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def deserialize(data: bytes) -> Sketch:
    data = bytes(data)
    if len(data) < _HEADER.size + _CRC.size:
        raise FormatError(f"truncated sketch: {len(data)} bytes")
    (magic, version, kind, d, w, seed, rate, landmark, epoch, local_count,
     max_ts, epsilon, delta, phi, width, depth) = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    expected = _HEADER.size + d * w * 2 * _COUNTER.itemsize + _CRC.size
    if len(data) != expected:
        raise FormatError(f"sketch of {d}x{w} needs {expected} bytes, got {len(data)}")
    body = data[:-_CRC.size]
    (crc,) = _CRC.unpack_from(data, len(body))
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch")
    try:
        config = SketchConfig(
            epsilon=epsilon, delta=delta, phi=phi, seed=seed,
            decay=DecaySpec.from_code(kind, rate, landmark),
            width=width or None, depth=depth or None,
        )
    except ValueError as exc:
        raise FormatError(f"invalid configuration: {exc}") from exc
    if config.dims != (d, w):
        raise FormatError(f"header shape {d}x{w} disagrees with configuration {config.dims}")
    sketch = Sketch(config)
    cells = np.frombuffer(body, dtype=_COUNTER, offset=_HEADER.size)
    sketch.items[...] = cells["item"].reshape(d, w, 2)
    sketch.freqs[...] = cells["freq"].reshape(d, w, 2)
    if not (np.isfinite(sketch.freqs).all() and (sketch.freqs >= 0).all()):
        raise FormatError("counter frequencies must be finite and non-negative")
    sketch.local_count = local_count
    sketch.scale_epoch = epoch
    sketch.max_timestamp = max_ts
    return sketch

"""Count-Min style sketch whose cells are two-counter Space Saving summaries.

Every record updates one cell per row with its non-normalized forward-decayed
weight. The per-row sum of all counters therefore always equals the sketch's
local count, exactly what a plain Count-Min row would hold.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import _kernels
from .decay import (
    OVERFLOW_GUARD,
    DecayDomainError,
    DecayKind,
    DecaySpec,
    WeightOverflow,
    normalize,
    normalize_array,
    raw_weights,
    rebase,
)
from .summary import EMPTY_ITEM, CellSummary, Counter

MERSENNE_61 = (1 << 61) - 1

_CHUNK = 1 << 20


class ConfigError(ValueError):
    pass


class AccuracyWarning(UserWarning):
    """Configuration is valid but voids the false-positive guarantee."""


def dims_from_params(epsilon: float, delta: float) -> tuple[int, int]:
    """Sketch shape: ``d = ceil(ln 1/delta)`` rows, ``w = ceil(e / (2 epsilon))`` columns."""
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    return math.ceil(math.log(1.0 / delta)), math.ceil(math.e / (2.0 * epsilon))


@dataclass(frozen=True)
class SketchConfig:
    """Accuracy parameters, hash seed and decay function.

    ``width``/``depth`` override the sizes derived from ``epsilon``/``delta``;
    with an explicit width the effective epsilon becomes ``e / (2 * width)``.
    """

    epsilon: float = 0.001
    delta: float = 0.05
    phi: float = 0.01
    seed: int = 0
    decay: DecaySpec = field(default_factory=DecaySpec)
    width: int | None = None
    depth: int | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.width is not None and self.width < 1:
            raise ConfigError(f"width must be positive, got {self.width}")
        if self.depth is not None and self.depth < 1:
            raise ConfigError(f"depth must be positive, got {self.depth}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.phi < 1.0:
            raise ConfigError(f"phi must lie in (0, 1), got {self.phi}")
        if not self.epsilon < self.phi:
            raise ConfigError(f"epsilon ({self.epsilon:g}) must be below phi ({self.phi:g})")
        if not self.effective_epsilon < self.phi:
            # experiment grids size by width and may cross phi; the
            # false-positive floor (phi - epsilon) C is then vacuous
            warnings.warn(
                f"width {self.width} gives epsilon {self.effective_epsilon:g} >= phi {self.phi:g}",
                AccuracyWarning, stacklevel=3,
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")

    @property
    def effective_epsilon(self) -> float:
        if self.width is not None:
            return math.e / (2.0 * self.width)
        return self.epsilon

    @property
    def dims(self) -> tuple[int, int]:
        d, w = dims_from_params(self.epsilon, self.delta)
        return (self.depth or d, self.width or w)


class StreamRecord(NamedTuple):
    item: int
    timestamp: float


@dataclass
class HeavyHitterReport:
    entries: dict[int, float]
    query_time: float
    normalized_total: float

    def items(self) -> set[int]:
        return set(self.entries)

    def __len__(self):
        return len(self.entries)


def hash_params(seed: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``d`` distinct ``(a, b)`` pairs for ``h(i) = ((a i + b) mod P) mod w``."""
    rng = np.random.default_rng(seed)
    a = np.empty(d, dtype=np.uint64)
    b = np.empty(d, dtype=np.uint64)
    seen = set()
    j = 0
    while j < d:
        aj = int(rng.integers(1, MERSENNE_61, dtype=np.uint64))
        bj = int(rng.integers(0, MERSENNE_61, dtype=np.uint64))
        if (aj, bj) in seen:
            continue
        seen.add((aj, bj))
        a[j], b[j] = aj, bj
        j += 1
    return a, b


class Sketch:
    """d x w grid of two-counter summaries (rows are 0-based)."""

    def __init__(self, config: SketchConfig):
        self.config = config
        self.d, self.w = config.dims
        self.hash_a, self.hash_b = hash_params(config.seed, self.d)
        self.items = np.full((self.d, self.w, 2), EMPTY_ITEM, dtype=np.uint64)
        self.freqs = np.zeros((self.d, self.w, 2), dtype=np.float64)
        self.local_count = 0.0
        self.scale_epoch = 0
        self.max_timestamp = -math.inf

    @property
    def decay(self) -> DecaySpec:
        """Decay spec at the current landmark."""
        return self.config.decay.at_epoch(self.scale_epoch)

    @property
    def landmark(self) -> float:
        return self.decay.landmark

    def copy(self) -> Sketch:
        other = object.__new__(Sketch)
        other.__dict__.update(self.__dict__)
        other.items = self.items.copy()
        other.freqs = self.freqs.copy()
        return other

    def __eq__(self, other):
        if not isinstance(other, Sketch):
            return NotImplemented
        return (
            self.config == other.config
            and self.scale_epoch == other.scale_epoch
            and _same_bits(self.local_count, other.local_count)
            and _same_bits(self.max_timestamp, other.max_timestamp)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.freqs.view(np.uint64), other.freqs.view(np.uint64))
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"Sketch(d={self.d}, w={self.w}, seed={self.config.seed}, "
            f"local_count={self.local_count:g}, epoch={self.scale_epoch})"
        )

    # -- hashing -----------------------------------------------------------

    def hash(self, row: int, item: int) -> int:
        """Column of ``item`` in ``row``."""
        out = np.empty((self.d, 1), dtype=np.int64)
        _kernels.hash_columns(self.hash_a, self.hash_b, np.array([item], dtype=np.uint64), self.w, out)
        return int(out[row, 0])

    def columns(self, items: np.ndarray) -> np.ndarray:
        """``(d, len(items))`` array of columns."""
        items = np.ascontiguousarray(items, dtype=np.uint64)
        out = np.empty((self.d, items.shape[0]), dtype=np.int64)
        _kernels.hash_columns(self.hash_a, self.hash_b, items, self.w, out)
        return out

    def cell(self, row: int, col: int) -> CellSummary:
        return CellSummary(*(
            Counter(int(self.items[row, col, s]), float(self.freqs[row, col, s])) for s in range(2)
        ))

    def row_totals(self) -> np.ndarray:
        return self.freqs.sum(axis=(1, 2))

    # -- ingestion ---------------------------------------------------------

    def process(self, record: StreamRecord | tuple[int, float]) -> None:
        item, ts = record
        self.process_many(np.array([item], dtype=np.uint64), np.array([ts], dtype=np.float64))

    def process_many(self, items: Iterable[int] | np.ndarray, timestamps: Iterable[float] | np.ndarray) -> None:
        """Ingest records in order.

        Exponential decay rebases automatically when the overflow guard trips;
        other decay kinds raise :class:`WeightOverflow`.
        """
        items = np.ascontiguousarray(items, dtype=np.uint64)
        timestamps = np.ascontiguousarray(timestamps, dtype=np.float64)
        if items.shape != timestamps.shape or items.ndim != 1:
            raise ValueError("items and timestamps must be 1-d arrays of equal length")
        if items.size == 0:
            return
        if (items == EMPTY_ITEM).any():
            raise ValueError(f"item id {EMPTY_ITEM} is reserved")
        lowest = timestamps.min()
        if not lowest >= self.config.decay.landmark:
            raise DecayDomainError(f"timestamp {lowest} precedes landmark {self.config.decay.landmark}")

        state = np.array([self.local_count])
        pos, n = 0, items.shape[0]
        while pos < n:
            stop = min(n, pos + _CHUNK)
            weights = raw_weights(self.decay, timestamps[pos:stop], check_domain=False)
            done = _kernels.ingest(
                items[pos:stop], weights, self.hash_a, self.hash_b,
                self.items, self.freqs, state, OVERFLOW_GUARD,
            )
            self.local_count = float(state[0])
            if done:
                self.max_timestamp = max(self.max_timestamp, float(timestamps[pos:pos + done].max()))
            pos += done
            if pos < stop:
                self._on_overflow(float(timestamps[pos]))
                state[0] = self.local_count

    def _on_overflow(self, t: float) -> None:
        base = self.config.decay
        if base.kind is not DecayKind.EXPONENTIAL:
            raise WeightOverflow(f"{base.kind.value} decay overflowed at t={t}; cannot rebase", t)
        target = base.epoch_for(t)
        if target <= self.scale_epoch:
            raise WeightOverflow(f"count overflow at t={t} within a single rebase interval", t)
        self.rebase_to(target)

    def rebase_to(self, epoch: int) -> None:
        """Move the landmark to grid point ``epoch`` and rescale all stored values."""
        if epoch == self.scale_epoch:
            return
        if epoch < self.scale_epoch:
            raise ValueError(f"cannot rebase backwards from epoch {self.scale_epoch} to {epoch}")
        m = rebase(self.decay, self.config.decay.at_epoch(epoch).landmark)
        self.freqs *= m
        self.items[self.freqs == 0.0] = EMPTY_ITEM
        self.local_count *= m
        self.scale_epoch = epoch

    # -- queries -----------------------------------------------------------

    def _default_time(self, t: float | None) -> float:
        """Query time, checked against the configured (not the rebased) landmark."""
        if t is None:
            return self.landmark if math.isinf(self.max_timestamp) else self.max_timestamp
        t = float(t)
        if not t >= self.config.decay.landmark:
            raise DecayDomainError(f"query time {t} precedes landmark {self.config.decay.landmark}")
        return t

    def raw_estimates(self, items: np.ndarray) -> np.ndarray:
        """Non-normalized point estimates (minimum over rows)."""
        items = np.ascontiguousarray(items, dtype=np.uint64)
        cols = self.columns(items)
        rows = np.arange(self.d)[:, None]
        ci = self.items[rows, cols]
        cf = self.freqs[rows, cols]
        occ = cf > 0.0
        hit0 = occ[..., 0] & (ci[..., 0] == items)
        hit1 = occ[..., 1] & (ci[..., 1] == items)
        fmin = np.where(occ[..., 0] & occ[..., 1], cf.min(axis=-1), 0.0)
        per_row = np.where(hit0, cf[..., 0], np.where(hit1, cf[..., 1], fmin))
        return per_row.min(axis=0)

    def point_estimate(self, item: int, t: float | None = None) -> float:
        """Normalized decayed-frequency estimate of ``item`` at time ``t``."""
        raw = float(self.raw_estimates(np.array([item], dtype=np.uint64))[0])
        return normalize(self.decay, raw, self._default_time(t), check_domain=False)

    def point_estimates(self, items: np.ndarray, t: float | None = None) -> np.ndarray:
        return normalize_array(self.decay, self.raw_estimates(items), self._default_time(t), check_domain=False)

    def max_counters(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell majority candidate ``(items, freqs)``; empty cells have freq 0."""
        f0, f1 = self.freqs[..., 0], self.freqs[..., 1]
        i0, i1 = self.items[..., 0], self.items[..., 1]
        pick1 = (f1 > f0) | ((f1 == f0) & (i1 > i0))
        return np.where(pick1, i1, i0), np.where(pick1, f1, f0)

    def query(self, t: float | None = None, gcount_raw: float | None = None,
              phi: float | None = None) -> HeavyHitterReport:
        """Report items whose estimated decayed frequency exceeds ``phi`` times the decayed count.

        ``gcount_raw`` defaults to this sketch's own local count, which is the
        reduced global count whenever the sketch is a full merge.
        """
        t = self._default_time(t)
        phi = self.config.phi if phi is None else phi
        gcount_raw = self.local_count if gcount_raw is None else gcount_raw
        spec = self.decay
        gcount = normalize(spec, gcount_raw, t, check_domain=False)
        threshold = phi * gcount
        cand_items, cand_freqs = self.max_counters()
        keep = (cand_freqs > 0.0) & (normalize_array(spec, cand_freqs, t, check_domain=False) > threshold)
        candidates = np.unique(cand_items[keep])
        entries: dict[int, float] = {}
        if candidates.size:
            estimates = self.point_estimates(candidates, t)
            for item, p in zip(candidates.tolist(), estimates.tolist()):
                if p > threshold:
                    entries[int(item)] = p
        return HeavyHitterReport(entries, t, gcount)


def _same_bits(a: float, b: float) -> bool:
    return np.float64(a).view(np.uint64) == np.float64(b).view(np.uint64)

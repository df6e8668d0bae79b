"""Exact decayed frequencies, used as ground truth for the sketch."""

from __future__ import annotations

import numba
import numpy as np

from ..decay import DecayDomainError, DecayKind, DecaySpec, normalize, normalize_array, raw_weights


@numba.njit(cache=True)
def _grouped_compensated_sum(group_starts, values):
    """Neumaier-compensated sum of each ``values[group_starts[k]:group_starts[k+1]]``."""
    n_groups = group_starts.shape[0]
    out = np.empty(n_groups, dtype=np.float64)
    for g in range(n_groups):
        lo = group_starts[g]
        hi = group_starts[g + 1] if g + 1 < n_groups else values.shape[0]
        s = 0.0
        comp = 0.0
        for k in range(lo, hi):
            v = values[k]
            t = s + v
            if abs(s) >= abs(v):
                comp += (s - t) + v
            else:
                comp += (v - t) + s
            s = t
        out[g] = s + comp
    return out


def compensated_sum(values: np.ndarray) -> float:
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.size == 0:
        return 0.0
    return float(_grouped_compensated_sum(np.zeros(1, dtype=np.int64), values)[0])


class ExactOracle:
    """Per-item decayed counts of a complete stream.

    Exponential weights are accumulated relative to the last timestamp
    (``reference.landmark``) so that arbitrarily long streams stay finite;
    normalized frequencies are unaffected by that choice.
    """

    def __init__(self, items: np.ndarray, timestamps: np.ndarray, decay: DecaySpec):
        items = np.asarray(items, dtype=np.uint64)
        timestamps = np.asarray(timestamps, dtype=np.float64)
        if timestamps.size and timestamps.min() < decay.landmark:
            raise ValueError(f"timestamp {timestamps.min()} precedes landmark {decay.landmark}")
        self.decay = decay
        self.reference = decay
        if decay.kind is DecayKind.EXPONENTIAL and timestamps.size:
            self.reference = DecaySpec.exponential(decay.rate, float(timestamps.max()))
        weights = raw_weights(self.reference, timestamps, check_domain=False)
        order = np.argsort(items, kind="stable")
        sorted_items = items[order]
        uniq, starts = np.unique(sorted_items, return_index=True)
        self.items = uniq
        self.raw = _grouped_compensated_sum(starts.astype(np.int64), weights[order]) if uniq.size else np.empty(0)
        self.raw_total = compensated_sum(weights)
        self.n = items.shape[0]
        self.max_timestamp = float(timestamps.max()) if timestamps.size else decay.landmark
        self._index = {int(i): k for k, i in enumerate(uniq.tolist())}

    def _time(self, t: float | None) -> float:
        if t is None:
            return self.max_timestamp
        if not t >= self.decay.landmark:
            raise DecayDomainError(f"query time {t} precedes landmark {self.decay.landmark}")
        return float(t)

    def total(self, t: float | None = None) -> float:
        """Decayed count ``C(t)``."""
        return normalize(self.reference, self.raw_total, self._time(t), check_domain=False)

    def frequency(self, item: int, t: float | None = None) -> float:
        k = self._index.get(int(item))
        if k is None:
            return 0.0
        return normalize(self.reference, float(self.raw[k]), self._time(t), check_domain=False)

    def frequencies(self, t: float | None = None) -> np.ndarray:
        """Normalized decayed frequency of every distinct item, aligned with ``self.items``."""
        return normalize_array(self.reference, self.raw, self._time(t), check_domain=False)

    def lookup(self, items: np.ndarray, t: float | None = None) -> np.ndarray:
        """Normalized frequencies of arbitrary items (0 for unseen ones)."""
        items = np.asarray(items, dtype=np.uint64)
        if self.items.size == 0:
            return np.zeros(items.shape)
        pos = np.minimum(np.searchsorted(self.items, items), self.items.size - 1)
        return np.where(self.items[pos] == items, self.frequencies(t)[pos], 0.0)


def exact_heavy_hitters(oracle: ExactOracle, phi: float, t: float | None = None) -> dict[int, float]:
    """Items whose decayed frequency strictly exceeds ``phi * C(t)``."""
    freqs = oracle.frequencies(t)
    threshold = phi * oracle.total(t)
    mask = freqs > threshold
    return {int(i): float(f) for i, f in zip(oracle.items[mask].tolist(), freqs[mask].tolist())}


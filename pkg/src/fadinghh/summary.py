"""Two-counter Space Saving summary held by every sketch cell.

A counter is occupied iff its frequency is positive; free slots carry the
reserved :data:`EMPTY_ITEM` id so the layout stays fixed-size.
"""

from __future__ import annotations

from typing import NamedTuple

EMPTY_ITEM = 2**64 - 1


class Counter(NamedTuple):
    item: int
    freq: float

    @property
    def occupied(self) -> bool:
        return self.freq > 0.0


EMPTY_COUNTER = Counter(EMPTY_ITEM, 0.0)


class CellSummary(NamedTuple):
    first: Counter = EMPTY_COUNTER
    second: Counter = EMPTY_COUNTER

    @classmethod
    def of(cls, *pairs: tuple[int, float]) -> CellSummary:
        """Build a summary from up to two ``(item, freq)`` pairs."""
        if len(pairs) > 2:
            raise ValueError("a cell holds at most two counters")
        counters = [Counter(int(i), float(f)) for i, f in pairs]
        counters += [EMPTY_COUNTER] * (2 - len(counters))
        return cls(*counters)

    def occupied(self) -> list[Counter]:
        return [c for c in self if c.occupied]

    def total(self) -> float:
        return self.first.freq + self.second.freq

    def lookup(self, item: int) -> Counter | None:
        for c in self:
            if c.occupied and c.item == item:
                return c
        return None


def ss_update(s: CellSummary, item: int, x: float) -> CellSummary:
    """Space Saving update of a two-counter summary by weight ``x``.

    A monitored item is incremented; otherwise a free slot takes it, or the
    minimum counter inherits its count plus ``x`` and switches to ``item``.
    On equal minima the counter with the smaller item id is evicted.
    """
    if x < 0:
        raise ValueError(f"weight must be non-negative, got {x}")
    c0, c1 = s
    if c0.occupied and c0.item == item:
        return CellSummary(Counter(item, c0.freq + x), c1)
    if c1.occupied and c1.item == item:
        return CellSummary(c0, Counter(item, c1.freq + x))
    if not c0.occupied:
        return CellSummary(Counter(item, x), c1)
    if not c1.occupied:
        return CellSummary(c0, Counter(item, x))
    if c0.freq < c1.freq or (c0.freq == c1.freq and c0.item < c1.item):
        return CellSummary(Counter(item, c0.freq + x), c1)
    return CellSummary(c0, Counter(item, c1.freq + x))


def min_freq(s: CellSummary) -> float:
    """Minimum counter value, 0 unless both counters are occupied."""
    c0, c1 = s
    if not (c0.occupied and c1.occupied):
        return 0.0
    return min(c0.freq, c1.freq)


def max_counter(s: CellSummary) -> Counter | None:
    """Largest occupied counter (larger item id on ties), ``None`` for an empty cell."""
    occ = s.occupied()
    if not occ:
        return None
    return max(occ, key=lambda c: (c.freq, c.item))

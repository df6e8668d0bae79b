"""Merging two sketches built with the same hash functions.

Corresponding cells are combined: an item monitored on both sides gets the sum
of its counters, an item monitored on one side only gets its counter plus the
other side's minimum. The combined summary (up to four entries) is then
purged back to its two largest entries. With two counters per cell the
discarded entries always sum to ``x * (min_1 + min_2)``, where ``x`` is the
number of entries beyond two, so the cell total of the result is exactly the
sum of the input totals.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import _kernels
from .sketch import Sketch
from .summary import EMPTY_COUNTER, CellSummary, Counter, min_freq


class IncompatibleSketch(ValueError):
    """Sketches differ in shape, hash functions, decay or scale epoch."""


class CombinedSummary(NamedTuple):
    """Combined entries of two cells, ascending by ``(freq, item)``."""

    entries: tuple[Counter, ...]

    def total(self) -> float:
        return sum(c.freq for c in self.entries)

    @property
    def excess(self) -> int:
        """Entries beyond the two a cell can hold (negative when fewer)."""
        return len(self.entries) - 2


def combine_cell(s1: CellSummary, s2: CellSummary) -> CombinedSummary:
    m1 = min_freq(s1)
    m2 = min_freq(s2)
    entries = []
    for c in s1.occupied():
        other = s2.lookup(c.item)
        entries.append(Counter(c.item, c.freq + (other.freq if other else m2)))
    for c in s2.occupied():
        if s1.lookup(c.item) is None:
            entries.append(Counter(c.item, c.freq + m1))
    entries.sort(key=lambda c: (c.freq, c.item))
    return CombinedSummary(tuple(entries))


def purge(combined: CombinedSummary) -> CellSummary:
    """Keep the two largest entries; on equal frequencies the larger item id survives."""
    kept = combined.entries[-2:]
    return CellSummary(*(list(kept) + [EMPTY_COUNTER] * (2 - len(kept))))


def check_compatible(a: Sketch, b: Sketch) -> None:
    if a is b:
        raise IncompatibleSketch("cannot merge a sketch with itself")
    mismatches = []
    if (a.d, a.w) != (b.d, b.w):
        mismatches.append(f"shape {a.d}x{a.w} vs {b.d}x{b.w}")
    if a.config.seed != b.config.seed or not (
        np.array_equal(a.hash_a, b.hash_a) and np.array_equal(a.hash_b, b.hash_b)
    ):
        mismatches.append("hash functions")
    if a.config.decay != b.config.decay:
        mismatches.append(f"decay {a.config.decay} vs {b.config.decay}")
    if a.scale_epoch != b.scale_epoch:
        mismatches.append(f"scale epoch {a.scale_epoch} vs {b.scale_epoch}")
    if mismatches:
        raise IncompatibleSketch("incompatible sketches: " + ", ".join(mismatches))


def merge_sketch(a: Sketch, b: Sketch) -> Sketch:
    """Merged sketch of two disjoint sub-streams; inputs are left untouched."""
    check_compatible(a, b)
    out = a.copy()
    _kernels.merge_cells(a.items, a.freqs, b.items, b.freqs, out.items, out.freqs)
    out.local_count = a.local_count + b.local_count
    out.max_timestamp = max(a.max_timestamp, b.max_timestamp)
    return out

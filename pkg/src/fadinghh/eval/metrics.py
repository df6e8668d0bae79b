"""Accuracy and throughput metrics for heavy-hitter reports."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..sketch import HeavyHitterReport
from .oracle import ExactOracle, exact_heavy_hitters

# columns that depend on wall-clock time and are excluded from reproducibility checks
TIMING_COLUMNS = ("updates_per_ms", "elapsed_ms")


class MeasurementError(ValueError):
    pass


@dataclass
class MetricsRow:
    n: int = 0
    m: int = 0
    rho: float = 0.0
    phi: float = 0.0
    w: int = 0
    d: int = 0
    p: int = 1
    seed: int = 0
    reported: int = 0
    true_heavy: int = 0
    precision: float = 1.0
    recall: float = 1.0
    abs_err_mean: float = 0.0
    abs_err_max: float = 0.0
    are_mean: float = 0.0
    are_max: float = 0.0
    false_positive_violations: int = 0
    updates_per_ms: float = math.nan
    elapsed_ms: float = math.nan

    @classmethod
    def columns(cls, timing: bool = True) -> list[str]:
        names = [f.name for f in fields(cls)]
        return names if timing else [n for n in names if n not in TIMING_COLUMNS]

    def as_dict(self, timing: bool = True) -> dict:
        row = asdict(self)
        if not timing:
            for name in TIMING_COLUMNS:
                row.pop(name)
        return row


def score(report: HeavyHitterReport, oracle: ExactOracle, phi: float, t: float | None = None,
          epsilon: float | None = None, **params) -> MetricsRow:
    """Compare a report against the exact heavy hitters at time ``t``.

    Precision and recall are 1 when their denominators are empty. Errors are
    taken over the reported items. With ``epsilon`` given, reported items whose
    exact frequency is at most ``(phi - epsilon) * C(t)`` are counted as
    violations of the false-positive guarantee.
    """
    t = report.query_time if t is None else t
    exact = exact_heavy_hitters(oracle, phi, t)
    reported = report.items()
    hits = len(reported & exact.keys())
    row = MetricsRow(**params)
    row.phi = phi
    row.reported = len(reported)
    row.true_heavy = len(exact)
    row.precision = hits / len(reported) if reported else 1.0
    row.recall = hits / len(exact) if exact else 1.0
    if reported:
        items = np.fromiter(report.entries.keys(), dtype=np.uint64, count=len(reported))
        estimates = np.fromiter(report.entries.values(), dtype=np.float64, count=len(reported))
        truth = oracle.lookup(items, t)
        abs_err = np.abs(truth - estimates)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel_err = np.where(truth > 0, abs_err / truth, math.inf)
        row.abs_err_mean = float(abs_err.mean())
        row.abs_err_max = float(abs_err.max())
        row.are_mean = float(rel_err.mean())
        row.are_max = float(rel_err.max())
        if epsilon is not None:
            floor = (phi - epsilon) * oracle.total(t)
            row.false_positive_violations = int((truth <= floor).sum())
    return row


def throughput(records: int, elapsed_ms: float) -> float:
    """Updates per millisecond."""
    if not elapsed_ms > 0:
        raise MeasurementError(f"elapsed time must be positive, got {elapsed_ms} ms")
    return records / elapsed_ms

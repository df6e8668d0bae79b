from .metrics import TIMING_COLUMNS, MeasurementError, MetricsRow, score, throughput
from .oracle import ExactOracle, compensated_sum, exact_heavy_hitters
from .streams import Stream, ZipfStreamSpec, generate, zipf_pmf

__all__ = [
    "TIMING_COLUMNS",
    "ExactOracle",
    "MeasurementError",
    "MetricsRow",
    "Stream",
    "ZipfStreamSpec",
    "compensated_sum",
    "exact_heavy_hitters",
    "generate",
    "score",
    "throughput",
    "zipf_pmf",
]

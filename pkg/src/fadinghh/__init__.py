"""Time-faded heavy hitters with mergeable augmented Count-Min sketches."""

from .decay import DecayKind, DecaySpec, normalize, raw_weight, rebase
from .harness import partition, reduce_counts, reduce_sketches, run_parallel
from .merge import IncompatibleSketch, combine_cell, merge_sketch, purge
from .sketch import ConfigError, HeavyHitterReport, Sketch, SketchConfig, StreamRecord, dims_from_params
from .summary import CellSummary, Counter, max_counter, min_freq, ss_update
from .wire import FormatError, deserialize, serialize

__version__ = "0.1.0"

__all__ = [
    "CellSummary",
    "ConfigError",
    "Counter",
    "DecayKind",
    "DecaySpec",
    "FormatError",
    "HeavyHitterReport",
    "IncompatibleSketch",
    "Sketch",
    "SketchConfig",
    "StreamRecord",
    "combine_cell",
    "deserialize",
    "dims_from_params",
    "max_counter",
    "merge_sketch",
    "min_freq",
    "normalize",
    "partition",
    "purge",
    "raw_weight",
    "rebase",
    "reduce_counts",
    "reduce_sketches",
    "run_parallel",
    "serialize",
    "ss_update",
]

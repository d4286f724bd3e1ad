"""Benchmark harness for key-value stores whose values grow over time.

The harness loads a fixed set of multi-field records, then runs a
succession of epochs: an extend phase that lengthens randomly chosen
fields, followed by a measured run phase issuing a configurable
operation mix.  Four experiment modes (main-run, clean-run,
spread-baseline, average-baseline) separate the effects of total data
volume, size skew, and update history.
"""

from ivsbench.core import (
    ExperimentConfig,
    KeyDistribution,
    LengthLedger,
    Mode,
    OpType,
    RecordSchema,
    ValueSizeHistogram,
    render_key,
)

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "KeyDistribution",
    "LengthLedger",
    "Mode",
    "OpType",
    "RecordSchema",
    "ValueSizeHistogram",
    "render_key",
    "__version__",
]

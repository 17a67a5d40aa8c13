"""Dynamic ensemble weighting for univariate forecasting with a tabular actor-critic."""

from .combiner import WeightVector, combine, from_logits
from .series import SplitPlan, TimeSeries, block_split, cats_split, load_csv, save_csv, synth_regimes

__version__ = "0.1.0"

__all__ = [
    "SplitPlan",
    "TimeSeries",
    "WeightVector",
    "block_split",
    "cats_split",
    "combine",
    "from_logits",
    "load_csv",
    "save_csv",
    "synth_regimes",
]

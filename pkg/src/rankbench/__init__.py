"""Deterministic benchmarking toolkit for implicit-feedback top-N recommendation.

Covers the full evaluation chain: ingestion, binarization and activity
filtering, train/validation/test splitting with per-user candidate sets,
negative sampling, baseline and latent-factor recommenders, ranking metrics,
hyper-parameter search, and metric-correlation analysis.
"""

__version__ = "0.1.0"

from .data import Interaction, InteractionLog, ingest, to_matrix
from .splitting import SplitBundle, split_by_ratio, split_leave_one_out

__all__ = [
    "Interaction",
    "InteractionLog",
    "SplitBundle",
    "ingest",
    "to_matrix",
    "split_by_ratio",
    "split_leave_one_out",
    "__version__",
]

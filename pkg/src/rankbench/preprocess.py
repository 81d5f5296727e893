"""Binarization and activity filtering of interaction logs.

Binarization turns explicit feedback into implicit positives by keeping
records at or above a threshold. Filtering removes inactive users and items,
either in a single pass (surviving entities may end up below the level) or
recursively to a fixed point (every survivor is guaranteed the level).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionLog


@dataclass(frozen=True)
class PreprocessConfig:
    """Threshold and filter settings applied before splitting.

    ``filter_mode`` is one of ``origin`` (no filtering), ``f_filter`` (one
    pass), ``f_core`` (recursive); ``filter_level`` is the minimum
    interaction count an entity must have.
    """

    positive_threshold: float = 1.0
    filter_mode: str = "origin"
    filter_level: int = 1
    keep_subthreshold_as_negative: bool = False

    def __post_init__(self):
        if self.positive_threshold < 0:
            raise ValueError("positive_threshold must be >= 0")
        if self.filter_mode not in ("origin", "f_filter", "f_core"):
            raise ValueError(f"unknown filter_mode {self.filter_mode!r}")
        if self.filter_level < 1:
            raise ValueError("filter_level must be >= 1")


def binarize(log: InteractionLog, threshold: float,
             keep_subthreshold: bool = False) -> InteractionLog:
    """Keep records with value >= threshold as positives of value 1.0.

    Below-threshold records are dropped so they fall back into the one
    unobserved pool that negative sampling draws from; ``keep_subthreshold``
    retains them with value 0.0 instead. Timestamps are preserved.
    """
    if len(log) == 0:
        raise ValueError("empty dataset")
    positive = log.values >= threshold
    if not positive.any():
        raise ValueError("binarization removed all interactions")
    if keep_subthreshold:
        return log.with_values(np.where(positive, 1.0, 0.0))
    kept = log.replace_records(positive)
    return kept.with_values(np.ones(len(kept)))


def _entity_counts(log: InteractionLog):
    user_counts = np.bincount(log.users, minlength=log.n_users)
    item_counts = np.bincount(log.items, minlength=log.n_items)
    return user_counts, item_counts


def one_pass_filter(log: InteractionLog, min_count: int) -> InteractionLog:
    """Remove users and items with fewer than ``min_count`` records, once.

    Counts are taken on the unfiltered input and both entity kinds are
    removed simultaneously, so survivors can end up below the level.
    Counts are record counts: duplicates count multiply.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    user_counts, item_counts = _entity_counts(log)
    keep = (user_counts[log.users] >= min_count) & (item_counts[log.items] >= min_count)
    if not keep.any():
        raise ValueError("filtering removed all interactions")
    return log.replace_records(keep)


def core_filter(log: InteractionLog, min_count: int) -> InteractionLog:
    """Repeat one-pass filtering until every user and item has >= min_count.

    The fixed point may be empty, which is an error.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    current = log
    while True:
        user_counts, item_counts = _entity_counts(current)
        keep = (user_counts[current.users] >= min_count) & (
            item_counts[current.items] >= min_count
        )
        if keep.all():
            return current
        if not keep.any():
            raise ValueError("core filtering eliminated the dataset")
        current = current.replace_records(keep)


def apply_preprocessing(log: InteractionLog, config: PreprocessConfig) -> InteractionLog:
    """Binarize then filter according to ``config``."""
    out = binarize(log, config.positive_threshold,
                   keep_subthreshold=config.keep_subthreshold_as_negative)
    if config.filter_mode == "f_filter":
        out = one_pass_filter(out, config.filter_level)
    elif config.filter_mode == "f_core":
        out = core_filter(out, config.filter_level)
    return out


def parse_filter_token(token: str) -> tuple[str, int]:
    """Decode CLI filter tokens: origin, f<k> (one pass), core<k> (recursive)."""
    if token == "origin":
        return "origin", 1
    for prefix, mode in (("core", "f_core"), ("f", "f_filter")):
        if token.startswith(prefix) and token[len(prefix):].isdigit():
            level = int(token[len(prefix):])
            if level >= 1:
                return mode, level
    raise ValueError(f"unknown filter token {token!r} (expected origin, f<k> or core<k>)")

"""Training-time negative sampling over the items a user never touched.

Five samplers: uniform, popularity-proportional (high), inverse-popularity
(low), and the two half/half hybrids of uniform with either popularity
sampler. Popularity is always counted on the training set only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionLog

SAMPLER_KINDS = ("uniform", "high_pop", "low_pop", "uniform_high_pop", "uniform_low_pop")

# weight floor for never-seen items under the popularity sampler, so they
# keep a nonzero chance of being drawn
ZERO_COUNT_WEIGHT = 0.5


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "uniform"
    negatives_per_positive: int = 1
    popularity_exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.popularity_exponent < 0:
            raise ValueError("popularity_exponent must be >= 0")


class PopularityTable:
    """Per-item training counts plus cumulative weights for weighted draws."""

    def __init__(self, counts: np.ndarray, exponent: float = 1.0):
        self.counts = np.asarray(counts, dtype=np.float64)
        if (self.counts < 0).any():
            raise ValueError("popularity counts must be non-negative")
        high = np.maximum(self.counts, ZERO_COUNT_WEIGHT) ** exponent
        low = 1.0 / (self.counts + 1.0) ** exponent
        if not (np.isfinite(high).all() and np.isfinite(low).all()):
            raise ValueError("popularity weights must be finite")
        self.high_cumulative = np.cumsum(high)
        self.low_cumulative = np.cumsum(low)

    @classmethod
    def from_log(cls, train: InteractionLog, exponent: float = 1.0) -> "PopularityTable":
        counts = np.bincount(train.items, minlength=train.n_items)
        return cls(counts, exponent)

    @property
    def n_items(self) -> int:
        return len(self.counts)

    def draw(self, mode: str, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw item indices with replacement: uniform or weighted by mode."""
        if mode == "uniform":
            return rng.integers(0, self.n_items, size=size)
        cumulative = self.high_cumulative if mode == "high" else self.low_cumulative
        points = rng.random(size) * cumulative[-1]
        return np.searchsorted(cumulative, points, side="right")


def _draw_modes(kind: str, k: int) -> list[tuple[str, int]]:
    if kind == "uniform":
        return [("uniform", k)]
    if kind == "high_pop":
        return [("high", k)]
    if kind == "low_pop":
        return [("low", k)]
    pop = "high" if kind == "uniform_high_pop" else "low"
    n_uniform = (k + 1) // 2
    return [("uniform", n_uniform), (pop, k - n_uniform)]


def sample_negatives(positives: set, k: int, table: PopularityTable,
                     config: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw ``k`` negatives for one user, never returning her positives.

    Rejection sampling keeps draws O(1) expected on sparse data; if a draw
    keeps hitting positives (dense user), the explicit complement is
    enumerated instead, which preserves the target distribution.
    """
    n_items = table.n_items
    if len(positives) >= n_items:
        raise ValueError("no negatives available: user observed every item")
    out = np.empty(k, dtype=np.int64)
    filled = 0
    for mode, count in _draw_modes(config.kind, k):
        remaining = count
        stalls = 0
        while remaining > 0:
            batch = table.draw(mode, remaining * 2, rng)
            for item in batch:
                if item not in positives:
                    out[filled] = item
                    filled += 1
                    remaining -= 1
                    if remaining == 0:
                        break
            else:
                stalls += 1
                if stalls >= 32:
                    taken = _draw_from_complement(positives, mode, remaining, table, rng)
                    out[filled:filled + remaining] = taken
                    filled += remaining
                    remaining = 0
    return out


def _draw_from_complement(positives, mode, size, table, rng):
    pool = np.setdiff1d(np.arange(table.n_items, dtype=np.int64),
                        np.fromiter(positives, dtype=np.int64, count=len(positives)))
    if mode == "uniform":
        return rng.choice(pool, size=size, replace=True)
    cumulative = table.high_cumulative if mode == "high" else table.low_cumulative
    weights = np.diff(cumulative, prepend=0.0)[pool]
    return rng.choice(pool, size=size, replace=True, p=weights / weights.sum())

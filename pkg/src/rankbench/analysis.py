"""Metric-correlation analyses over tuning trials and method rankings.

Two complementary views of how the six metrics agree:

* the co-optimality matrix asks, over many tuning runs, how often the trial
  that is best for one metric is simultaneously best for another; it is
  asymmetric by construction;
* the Kendall matrix correlates the method orderings that two metrics
  induce over a set of compared methods; it is symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .metrics import METRICS


@dataclass
class CoOptimalityMatrix:
    """P(best-for-row-metric trial is also best for column metric)."""

    values: np.ndarray              # 6 x 6 in METRICS order
    n_runs: int

    def to_csv(self) -> str:
        lines = ["metric," + ",".join(METRICS)]
        for row_index, metric in enumerate(METRICS):
            cells = ",".join(repr(float(v)) for v in self.values[row_index])
            lines.append(f"{metric},{cells}")
        lines.append(f"# runs,{self.n_runs}")
        return "\n".join(lines) + "\n"


@dataclass
class KendallMatrix:
    """Tie-corrected rank correlation between metric-induced method orderings.

    Cells where a metric is constant across all methods are undefined and
    stored as NaN rather than 0.
    """

    values: np.ndarray

    def to_csv(self) -> str:
        lines = ["metric," + ",".join(METRICS)]
        for row_index, metric in enumerate(METRICS):
            cells = ",".join(
                "" if math.isnan(v) else repr(float(v)) for v in self.values[row_index]
            )
            lines.append(f"{metric},{cells}")
        return "\n".join(lines) + "\n"


def _best_trial_index(trials: Sequence[Dict[str, float]], metric: str) -> int:
    """Index of the maximal trial for a metric; ties go to the earliest trial."""
    best, best_value = 0, -math.inf
    for index, trial in enumerate(trials):
        value = trial[metric]
        if value > best_value:
            best, best_value = index, value
    return best


def co_optimality(runs: Sequence[Sequence[Dict[str, float]]]) -> CoOptimalityMatrix:
    """Count simultaneous optima metric-by-metric, normalized by run count.

    Each run is one tuning history: a sequence of trials, each carrying all
    six validation metrics. A tie at a metric's best value counts as
    optimal for it.
    """
    if not runs:
        raise ValueError("need at least one run")
    counts = np.zeros((len(METRICS), len(METRICS)))
    for run in runs:
        if not run:
            raise ValueError("empty run: no trials")
        for trial in run:
            missing = [m for m in METRICS if m not in trial]
            if missing:
                raise ValueError(f"trial missing metrics {missing}")
        maxima = {m: max(trial[m] for trial in run) for m in METRICS}
        for row, metric in enumerate(METRICS):
            chosen = run[_best_trial_index(run, metric)]
            for col, other in enumerate(METRICS):
                if chosen[other] == maxima[other]:
                    counts[row, col] += 1
    return CoOptimalityMatrix(counts / len(runs), len(runs))


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> float:
    """Tie-corrected Kendall correlation by direct pair counting.

    Returns NaN when either sequence is constant (correlation undefined).
    Quadratic in the number of methods, which is tiny here.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError("sequences must have equal length")
    n = len(x)
    if n < 2:
        raise ValueError("need at least two observations")
    concordant = discordant = ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                ties_x += 1
                ties_y += 1
            elif dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    n_pairs = n * (n - 1) // 2
    denom = math.sqrt((n_pairs - ties_x) * (n_pairs - ties_y))
    if denom == 0:
        return float("nan")
    return (concordant - discordant) / denom


def kendall_matrix(table: Dict[str, Dict[str, float]],
                   methods: Optional[List[str]] = None) -> KendallMatrix:
    """Kendall correlation between every metric pair over a methods table.

    ``table`` maps method name -> {metric: value}. Needs at least two
    methods. The diagonal is 1 by definition (an ordering always agrees
    with itself).
    """
    if methods is None:
        methods = sorted(table)
    if len(methods) < 2:
        raise ValueError("need at least two methods to correlate rankings")
    columns = {
        metric: [table[method][metric] for method in methods] for metric in METRICS
    }
    values = np.ones((len(METRICS), len(METRICS)))
    for i, metric_a in enumerate(METRICS):
        for j in range(i + 1, len(METRICS)):
            tau = kendall_tau_b(columns[metric_a], columns[METRICS[j]])
            values[i, j] = tau
            values[j, i] = tau
    return KendallMatrix(values)

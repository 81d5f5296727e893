"""Hyper-parameter search: grid, random, and a Parzen-estimator strategy.

Trials train on the inner training set and are scored on validation
candidates only; the test set never enters a trial. After the search the
best configuration is retrained on the full training data and evaluated
once on the test candidates.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from ._util import derived_rng, derived_seed
from .factorization import TrainingDiverged
from .metrics import METRICS

STRATEGIES = ("grid", "random", "tpe")

TPE_STARTUP_TRIALS = 10
TPE_GOOD_FRACTION = 0.25
TPE_CANDIDATES = 24
_MIN_BANDWIDTH_FRACTION = 0.01   # kernel width floor: range / 100


@dataclass(frozen=True)
class Dimension:
    """One search dimension: categorical or a numeric interval."""

    kind: str                         # categorical | int_uniform | uniform | log_uniform
    values: Optional[Tuple] = None    # categorical choices
    low: Optional[float] = None
    high: Optional[float] = None

    def __post_init__(self):
        if self.kind == "categorical":
            if not self.values:
                raise ValueError("categorical dimension needs at least one value")
        elif self.kind in ("int_uniform", "uniform", "log_uniform"):
            if self.low is None or self.high is None or not self.low < self.high:
                raise ValueError("numeric dimension needs low < high")
            if self.kind == "log_uniform" and self.low <= 0:
                raise ValueError("log_uniform bounds must be positive")
        else:
            raise ValueError(f"unknown dimension kind {self.kind!r}")

    def sample(self, rng: np.random.Generator):
        if self.kind == "categorical":
            return self.values[rng.integers(len(self.values))]
        if self.kind == "int_uniform":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.kind == "uniform":
            return float(rng.uniform(self.low, self.high))
        return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))

    def grid_values(self) -> List:
        if self.kind == "categorical":
            return list(self.values)
        if self.kind == "int_uniform":
            return list(range(int(self.low), int(self.high) + 1))
        raise ValueError(
            f"continuous dimension of kind {self.kind!r} cannot be grid-enumerated; "
            "discretize it as categorical"
        )


class SearchSpace:
    """Named dimensions; iteration order is the sorted dimension names."""

    def __init__(self, dimensions: Dict[str, Dimension]):
        self.dimensions = dict(dimensions)

    def __len__(self) -> int:
        return len(self.dimensions)

    def names(self) -> List[str]:
        return sorted(self.dimensions)

    def sample(self, rng: np.random.Generator) -> Dict:
        return {name: self.dimensions[name].sample(rng) for name in self.names()}

    @classmethod
    def from_dict(cls, spec: Dict) -> "SearchSpace":
        dims = {}
        for name, entry in spec.items():
            kind = entry["type"]
            if kind == "categorical":
                dims[name] = Dimension(kind, values=tuple(entry["values"]))
            else:
                dims[name] = Dimension(kind, low=entry["low"], high=entry["high"])
        return cls(dims)

    def to_dict(self) -> Dict:
        out = {}
        for name, dim in self.dimensions.items():
            if dim.kind == "categorical":
                out[name] = {"type": "categorical", "values": list(dim.values)}
            else:
                out[name] = {"type": dim.kind, "low": dim.low, "high": dim.high}
        return out


@dataclass
class TrialRecord:
    """One evaluated configuration with its validation metrics."""

    trial_id: int
    params: Dict
    metrics: Dict[str, float]
    objective: float
    seed: int
    status: str = "ok"                  # ok | diverged
    elapsed: float = field(default=0.0, compare=False)

    def to_json(self) -> str:
        # elapsed is wall time and intentionally left out so that reruns of
        # the same seed produce byte-identical trial logs
        payload = {
            "trial_id": self.trial_id,
            "params": self.params,
            "metrics": self.metrics,
            "objective": None if math.isinf(self.objective) else self.objective,
            "seed": self.seed,
            "status": self.status,
        }
        return json.dumps(payload, sort_keys=True)


def grid_search(space: SearchSpace) -> List[Dict]:
    """Cartesian product over all dimensions, in sorted-name lexicographic order."""
    names = space.names()
    if not names:
        return [{}]
    value_lists = [space.dimensions[name].grid_values() for name in names]
    return [dict(zip(names, combo)) for combo in itertools.product(*value_lists)]


def random_search(space: SearchSpace, n_trials: int, seed: int) -> List[Dict]:
    """Independent per-dimension draws; the same seed replays the same stream."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = derived_rng(seed, "search")
    return [space.sample(rng) for _ in range(n_trials)]


def _neighbor_bandwidths(points: np.ndarray, span: float) -> np.ndarray:
    """Kernel widths from neighbor gaps, clipped to [span/min(100, n+1), span].

    The lower clamp follows the reference Parzen construction: wide kernels
    while observations are scarce, tightening toward span/100 as they
    accumulate.
    """
    floor = span / min(1.0 / _MIN_BANDWIDTH_FRACTION, 1.0 + len(points))
    if len(points) == 1:
        return np.asarray([floor])
    order = np.argsort(points)
    gaps = np.diff(points[order])
    widths = np.empty(len(points))
    left = np.concatenate([[np.inf], gaps])
    right = np.concatenate([gaps, [np.inf]])
    spacing = np.where(np.isinf(left), right, np.where(np.isinf(right), left,
                                                       np.maximum(left, right)))
    widths[order] = spacing
    return np.clip(widths, floor, span)


def _normal_cdf(x):
    from scipy.special import ndtr

    return ndtr(x)


class _NumericDensity:
    """Truncated Gaussian kernel mixture over one numeric dimension.

    Besides one kernel per observed point, the mixture carries a domain-wide
    prior kernel (midpoint, bandwidth = full range) as in the reference
    Parzen-estimator construction; it keeps tails fat enough that proposals
    can escape a tight cluster of observations.
    """

    def __init__(self, points: np.ndarray, low: float, high: float):
        self.low = low
        self.high = high
        observed = np.asarray(points, dtype=np.float64)
        widths = _neighbor_bandwidths(observed, high - low)
        self.points = np.concatenate([observed, [(low + high) / 2.0]])
        self.bandwidths = np.concatenate([widths, [high - low]])
        self.norms = _normal_cdf((high - self.points) / self.bandwidths) - _normal_cdf(
            (low - self.points) / self.bandwidths
        )
        self.norms = np.maximum(self.norms, 1e-12)

    def log_pdf(self, x: float) -> float:
        z = (x - self.points) / self.bandwidths
        kernel = np.exp(-0.5 * z ** 2) / (np.sqrt(2.0 * np.pi) * self.bandwidths)
        density = np.mean(kernel / self.norms)
        return math.log(max(density, 1e-300))

    def sample(self, rng: np.random.Generator) -> float:
        idx = rng.integers(len(self.points))
        for _ in range(100):
            draw = rng.normal(self.points[idx], self.bandwidths[idx])
            if self.low <= draw <= self.high:
                return float(draw)
        return float(np.clip(rng.normal(self.points[idx], self.bandwidths[idx]),
                             self.low, self.high))


class _CategoricalDensity:
    """Add-one-smoothed frequency table over a categorical dimension."""

    def __init__(self, observed: List, values: Tuple):
        self.values = values
        counts = np.array([sum(1 for v in observed if v == value) for value in values],
                          dtype=np.float64)
        self.probs = (counts + 1.0) / (counts.sum() + len(values))

    def log_pdf(self, value) -> float:
        return math.log(self.probs[self.values.index(value)])

    def sample(self, rng: np.random.Generator):
        return self.values[rng.choice(len(self.values), p=self.probs)]


def _to_internal(dim: Dimension, value):
    return math.log(value) if dim.kind == "log_uniform" else float(value)


def _from_internal(dim: Dimension, value: float):
    if dim.kind == "log_uniform":
        return float(math.exp(value))
    if dim.kind == "int_uniform":
        return int(np.clip(round(value), int(dim.low), int(dim.high)))
    return float(value)


def _internal_bounds(dim: Dimension) -> Tuple[float, float]:
    if dim.kind == "log_uniform":
        return math.log(dim.low), math.log(dim.high)
    return float(dim.low), float(dim.high)


def tpe_propose(space: SearchSpace, history: List[TrialRecord], seed: int,
                trial_id: int, n_startup: int = TPE_STARTUP_TRIALS,
                good_fraction: float = TPE_GOOD_FRACTION,
                n_candidates: int = TPE_CANDIDATES) -> Dict:
    """Next configuration: maximize the good/bad density ratio of past trials.

    The first ``n_startup`` proposals are plain random draws, as is any
    situation where the history carries no signal (fewer than two finite
    objectives, or all objectives equal).
    """
    rng = derived_rng(seed, "search", trial_id)
    finite = [t for t in history if math.isfinite(t.objective)]
    if len(history) < n_startup or len(finite) < 2:
        return space.sample(rng)
    objectives = np.array([t.objective for t in finite])
    if objectives.max() == objectives.min():
        return space.sample(rng)

    order = np.argsort(-objectives, kind="stable")
    n_good = max(1, math.ceil(good_fraction * len(finite)))
    good = [finite[i] for i in order[:n_good]]
    bad = [finite[i] for i in order[n_good:]]
    if not bad:
        return space.sample(rng)

    densities = {}
    for name in space.names():
        dim = space.dimensions[name]
        good_vals = [t.params[name] for t in good]
        bad_vals = [t.params[name] for t in bad]
        if dim.kind == "categorical":
            densities[name] = (
                _CategoricalDensity(good_vals, dim.values),
                _CategoricalDensity(bad_vals, dim.values),
            )
        else:
            low, high = _internal_bounds(dim)
            densities[name] = (
                _NumericDensity(np.array([_to_internal(dim, v) for v in good_vals]),
                                low, high),
                _NumericDensity(np.array([_to_internal(dim, v) for v in bad_vals]),
                                low, high),
            )

    best_params, best_score = None, -np.inf
    for _ in range(n_candidates):
        candidate_internal = {}
        score = 0.0
        for name in space.names():
            dim = space.dimensions[name]
            good_density, bad_density = densities[name]
            drawn = good_density.sample(rng)
            candidate_internal[name] = drawn
            score += good_density.log_pdf(drawn) - bad_density.log_pdf(drawn)
        if score > best_score:
            best_score = score
            best_params = candidate_internal
    out = {}
    for name in space.names():
        dim = space.dimensions[name]
        value = best_params[name]
        out[name] = value if dim.kind == "categorical" else _from_internal(dim, value)
    return out


def tpe_search(space: SearchSpace, n_trials: int, seed: int,
               objective_fn: Callable[[Dict], float]) -> List[TrialRecord]:
    """Sequential search over a plain objective function (used for self-tests)."""
    history: List[TrialRecord] = []
    for trial_id in range(n_trials):
        params = tpe_propose(space, history, seed, trial_id)
        value = objective_fn(params)
        history.append(TrialRecord(trial_id, params, {}, value,
                                   derived_seed(seed, "trial", trial_id)))
    return history


class TuningTask:
    """What the tuner needs from a model family, with hygiene built in.

    ``evaluate_trial(params, seed)`` fits on the inner training set and
    returns all six metrics on the validation candidates;
    ``retrain_and_test(params, seed)`` fits on the full training data and
    returns the test-candidate reports. Neither callable sees the other's
    data.
    """

    def __init__(self, evaluate_trial: Callable[[Dict, int], Dict[str, float]],
                 retrain_and_test: Callable[[Dict, int], Dict]):
        self.evaluate_trial = evaluate_trial
        self.retrain_and_test = retrain_and_test


def run_tuning(task: TuningTask, space: SearchSpace, strategy: str,
               n_trials: int, seed: int, objective_metric: str = "ndcg"):
    """Search, pick the best validation trial, retrain, and test once.

    Returns (best trial, all trials, final test reports). Diverged trials
    are recorded with objective -inf and never retried; if every trial
    diverges the tuning fails. An empty space always runs exactly one trial.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown search strategy {strategy!r}")
    if objective_metric not in METRICS:
        raise ValueError(f"unknown objective metric {objective_metric!r}")

    if len(space) == 0:
        proposals: Optional[List[Dict]] = [{}]
    elif strategy == "grid":
        proposals = grid_search(space)
    elif strategy == "random":
        proposals = random_search(space, n_trials, seed)
    else:
        proposals = None    # sequential: each proposal consumes the history

    n_total = len(proposals) if proposals is not None else n_trials
    records: List[TrialRecord] = []
    for trial_id in range(n_total):
        if proposals is not None:
            params = proposals[trial_id]
        else:
            params = tpe_propose(space, records, seed, trial_id)
        trial_seed = derived_seed(seed, "trial", trial_id)
        started = time.perf_counter()
        try:
            metrics = task.evaluate_trial(params, trial_seed)
            missing = [m for m in METRICS if m not in metrics]
            if missing:
                raise ValueError(f"trial metrics missing {missing}")
            record = TrialRecord(
                trial_id, params, {m: float(metrics[m]) for m in METRICS},
                float(metrics[objective_metric]), trial_seed,
                status="ok", elapsed=time.perf_counter() - started,
            )
        except TrainingDiverged:
            record = TrialRecord(
                trial_id, params, {}, -np.inf, trial_seed,
                status="diverged", elapsed=time.perf_counter() - started,
            )
        records.append(record)

    finite = [r for r in records if math.isfinite(r.objective)]
    if not finite:
        raise RuntimeError("tuning failed: every trial diverged")
    best = max(finite, key=lambda r: (r.objective, -r.trial_id))
    test_reports = task.retrain_and_test(best.params, derived_seed(seed, "retrain"))
    return best, records, test_reports


def records_to_jsonl(records: Iterable[TrialRecord]) -> str:
    return "\n".join(record.to_json() for record in records) + "\n"

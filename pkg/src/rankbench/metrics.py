"""The six ranking metrics over per-user candidate rankings.

All metrics live in [0, 1] and are averaged arithmetically over the users
that have a non-empty test set (users without test items are excluded, not
counted as zeros). Gains are binary: an item either is or is not one of the
user's test positives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .splitting import SplitBundle

METRICS = ("precision", "recall", "hr", "map", "mrr", "ndcg")


def evaluate_user(ranked: Sequence[int], test_items: Iterable[int],
                  cutoff: int) -> Dict[str, float]:
    """Score one user's ranking against her test positives at one cutoff.

    precision  hits / cutoff
    recall     hits / |test set|
    hr         1 if any hit in the top ``cutoff``
    map        mean of precision@j over hit ranks j, normalized by
               min(|test set|, cutoff)
    mrr        1 / rank of the first hit, 0 when nothing hits
    ndcg       binary-gain DCG against the ideal ranking of the test items
    """
    test = set(test_items)
    if not test:
        raise ValueError("test set must be non-empty")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    top = list(ranked[:cutoff])
    if len(set(top)) != len(top):
        raise ValueError("ranking contains duplicate items")

    hits = 0
    precision_sum = 0.0
    first_hit_rank = 0
    dcg = 0.0
    for rank, item in enumerate(top, start=1):
        if item in test:
            hits += 1
            precision_sum += hits / rank
            dcg += 1.0 / math.log2(rank + 1)
            if first_hit_rank == 0:
                first_hit_rank = rank
    ideal_hits = min(len(test), cutoff)
    idcg = sum(1.0 / math.log2(rank + 1) for rank in range(1, ideal_hits + 1))
    return {
        "precision": hits / cutoff,
        "recall": hits / len(test),
        "hr": 1.0 if hits > 0 else 0.0,
        "map": precision_sum / ideal_hits,
        "mrr": 1.0 / first_hit_rank if first_hit_rank else 0.0,
        "ndcg": dcg / idcg,
    }


@dataclass
class MetricReport:
    """Aggregate metric means at one cutoff, with optional per-user detail."""

    cutoff: int
    means: Dict[str, float]
    n_users: int
    per_user: Optional[Dict[int, Dict[str, float]]] = field(default=None, repr=False)

    def __getitem__(self, metric: str) -> float:
        return self.means[metric]


def positives_by_user(test_log) -> Dict[int, set]:
    """Group a test log's positive items by user index."""
    by_user: Dict[int, set] = {}
    for user, item, value in zip(test_log.users, test_log.items, test_log.values):
        if value > 0:
            by_user.setdefault(int(user), set()).add(int(item))
    return by_user


def evaluate_all(model, bundle: SplitBundle, cutoffs: Sequence[int],
                 keep_per_user: bool = False) -> Dict[int, MetricReport]:
    """Rank every test user's candidate list once and score it at each cutoff.

    Aggregation uses compensated summation so the result is independent of
    the user iteration order.
    """
    cutoffs = sorted(set(int(c) for c in cutoffs))
    if not cutoffs:
        raise ValueError("need at least one cutoff")
    test_sets = positives_by_user(bundle.test)
    users = sorted(test_sets)
    per_cut: Dict[int, Dict[str, List[float]]] = {
        c: {m: [] for m in METRICS} for c in cutoffs
    }
    per_user_detail: Dict[int, Dict[int, Dict[str, float]]] = {c: {} for c in cutoffs}
    for user in users:
        if user not in bundle.candidates:
            raise ValueError(f"no candidate list for test user {user}")
        ranked = model.recommend(user, bundle.candidates[user], max(cutoffs))
        for cutoff in cutoffs:
            row = evaluate_user(ranked, test_sets[user], cutoff)
            for metric in METRICS:
                per_cut[cutoff][metric].append(row[metric])
            if keep_per_user:
                per_user_detail[cutoff][user] = row
    reports = {}
    for cutoff in cutoffs:
        means = {
            metric: (math.fsum(vals) / len(vals) if vals else float("nan"))
            for metric, vals in per_cut[cutoff].items()
        }
        reports[cutoff] = MetricReport(
            cutoff=cutoff,
            means=means,
            n_users=len(users),
            per_user=per_user_detail[cutoff] if keep_per_user else None,
        )
    return reports


def reports_to_csv(reports: Dict[int, MetricReport]) -> str:
    """Serialize reports as ``metric,N,value`` rows in a fixed order."""
    lines = ["metric,N,value"]
    for metric in METRICS:
        for cutoff in sorted(reports):
            lines.append(f"{metric},{cutoff},{reports[cutoff].means[metric]!r}")
    return "\n".join(lines) + "\n"


def reports_to_json(reports: Dict[int, MetricReport]) -> str:
    payload = {
        str(cutoff): {m: reports[cutoff].means[m] for m in METRICS}
        for cutoff in sorted(reports)
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def parse_metrics_csv(text: str) -> Dict[int, Dict[str, float]]:
    """Inverse of :func:`reports_to_csv`, keyed by cutoff."""
    out: Dict[int, Dict[str, float]] = {}
    lines = [ln for ln in text.splitlines() if ln.strip()]
    for line in lines[1:]:
        metric, cutoff, value = line.split(",")
        out.setdefault(int(cutoff), {})[metric] = float(value)
    return out

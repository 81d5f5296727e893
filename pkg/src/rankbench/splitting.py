"""Train/validation/test splitting and per-user candidate sets.

Two base splitting methods, each random or time-aware:

* split-by-ratio: a fraction of records to train, the rest to test, cut
  either globally over all records or per user;
* leave-one-out: per user, one record (latest, or seeded-random) to test.

Time-aware order sorts by timestamp with ties broken by stable input order.
The train share is rounded up so a single-record user trains rather than
tests. Candidate sets pair every test user's positives with sampled
unobserved items up to a fixed size, so models rank a bounded list.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ._util import derived_rng, derived_seed
from .data import InteractionLog, write_log


@dataclass(frozen=True)
class SplitConfig:
    """How to carve one log into train/validation/test plus candidates."""

    method: str = "sbr"                # "sbr" or "loo"
    time_aware: bool = False
    level: str = "global"              # "global" or "user" (sbr only)
    train_fraction: float = 0.8
    validation_fraction: float = 0.1
    candidate_size: int = 1000
    exclude_from_candidates: str = "all"   # "all" or "train"
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("sbr", "loo"):
            raise ValueError(f"unknown split method {self.method!r}")
        if self.level not in ("global", "user"):
            raise ValueError(f"unknown split level {self.level!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.candidate_size < 1:
            raise ValueError("candidate_size must be >= 1")
        if self.exclude_from_candidates not in ("all", "train"):
            raise ValueError("exclude_from_candidates must be 'all' or 'train'")

    @classmethod
    def from_token(cls, token: str, **kwargs) -> "SplitConfig":
        """Build from the compact CLI tokens rsbr/tsbr/rloo/tloo."""
        mapping = {
            "rsbr": ("sbr", False),
            "tsbr": ("sbr", True),
            "rloo": ("loo", False),
            "tloo": ("loo", True),
        }
        if token not in mapping:
            raise ValueError(f"unknown split token {token!r}")
        method, time_aware = mapping[token]
        return cls(method=method, time_aware=time_aware, **kwargs)

    @property
    def token(self) -> str:
        return ("t" if self.time_aware else "r") + self.method


@dataclass(frozen=True)
class SplitBundle:
    """The unit passed from splitter to trainer to evaluator.

    ``candidates`` maps each test user's dense index to the ordered item
    list she is ranked on: all her test positives plus sampled unobserved
    items.
    """

    train: InteractionLog
    validation: InteractionLog
    test: InteractionLog
    candidates: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return self.train.n_users

    @property
    def n_items(self) -> int:
        return self.train.n_items


def _ordered_positions(log: InteractionLog, positions, time_aware: bool,
                       rng: Optional[np.random.Generator]):
    """Record positions in split order: chronological or seeded-shuffled."""
    positions = np.asarray(positions, dtype=np.int64)
    if time_aware:
        # stable sort keeps input order among equal timestamps
        return positions[np.argsort(log.timestamps[positions], kind="stable")]
    return rng.permutation(positions)


def split_by_ratio(log: InteractionLog, train_fraction: float = 0.8,
                   time_aware: bool = False, level: str = "global",
                   seed: int = 0) -> tuple[InteractionLog, InteractionLog]:
    """Hold out the trailing share of records as test.

    Global level cuts the whole record sequence; user level applies the cut
    within each user's records, so every user trains on ceil(fraction *
    count) of her own records. Users whose test share rounds to zero
    contribute no test records.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    if time_aware and not log.has_timestamps:
        raise ValueError("time-aware split requested but log has no timestamps")
    rng = None if time_aware else derived_rng(seed, "split")
    if level == "global":
        order = _ordered_positions(log, np.arange(len(log)), time_aware, rng)
        cut = int(np.ceil(train_fraction * len(order)))
        train_pos, test_pos = order[:cut], order[cut:]
    elif level == "user":
        train_parts, test_parts = [], []
        for user in range(log.n_users):
            positions = np.nonzero(log.users == user)[0]
            if len(positions) == 0:
                continue
            order = _ordered_positions(log, positions, time_aware, rng)
            cut = int(np.ceil(train_fraction * len(order)))
            train_parts.append(order[:cut])
            test_parts.append(order[cut:])
        train_pos = np.concatenate(train_parts) if train_parts else np.empty(0, np.int64)
        test_pos = np.concatenate(test_parts) if test_parts else np.empty(0, np.int64)
    else:
        raise ValueError(f"unknown split level {level!r}")
    return log.take(train_pos), log.take(test_pos)


def split_leave_one_out(log: InteractionLog, time_aware: bool = False,
                        seed: int = 0) -> tuple[InteractionLog, InteractionLog]:
    """Per user, move one record to test: the latest one, or a seeded-random one.

    Users with a single record keep it in train and have no test entry.
    Timestamp ties pick the last occurrence in input order.
    """
    if time_aware and not log.has_timestamps:
        raise ValueError("time-aware split requested but log has no timestamps")
    rng = None if time_aware else derived_rng(seed, "split")
    test_mask = np.zeros(len(log), dtype=bool)
    for user in range(log.n_users):
        positions = np.nonzero(log.users == user)[0]
        if len(positions) < 2:
            continue
        if time_aware:
            ts = log.timestamps[positions]
            best = positions[np.nonzero(ts == ts.max())[0][-1]]
        else:
            best = positions[rng.integers(len(positions))]
        test_mask[best] = True
    return log.take(np.nonzero(~test_mask)[0]), log.take(np.nonzero(test_mask)[0])


def hold_out_validation(train: InteractionLog, config: SplitConfig
                        ) -> tuple[InteractionLog, InteractionLog]:
    """Carve a validation slice from the training set, by the same split rule.

    Ratio splits hold out ``validation_fraction`` of the train records (the
    latest ones when time-aware); leave-one-out holds out one record per
    user. A zero fraction returns the train set untouched.
    """
    if len(train) == 0:
        raise ValueError("cannot hold out validation from an empty training set")
    # distinct stream from the outer split so the two shuffles are independent
    inner_seed = derived_seed(config.seed, "validation")
    if config.method == "sbr":
        if config.validation_fraction == 0.0:
            return train, train.take(np.empty(0, np.int64))
        return split_by_ratio(
            train,
            train_fraction=1.0 - config.validation_fraction,
            time_aware=config.time_aware,
            level=config.level,
            seed=inner_seed,
        )
    return split_leave_one_out(train, time_aware=config.time_aware, seed=inner_seed)


def _positives_by_user(log: InteractionLog) -> Dict[int, np.ndarray]:
    by_user: Dict[int, list] = {}
    for user, item, value in zip(log.users, log.items, log.values):
        if value > 0:
            by_user.setdefault(int(user), []).append(int(item))
    return {u: np.unique(np.asarray(items, dtype=np.int64)) for u, items in by_user.items()}


def build_candidates(test: InteractionLog, observed_logs, n_items: int,
                     candidate_size: int = 1000, seed: int = 0
                     ) -> Dict[int, np.ndarray]:
    """Fixed-size ranking lists per test user: test positives + sampled negatives.

    Negatives are drawn uniformly without replacement from the items the
    user never touched in any of ``observed_logs``; when that pool is
    smaller than needed the whole pool is used. Each user draws from her own
    derived RNG stream, so construction is order-independent and
    parallel-safe.
    """
    test_items = _positives_by_user(test)
    observed: Dict[int, set] = {u: set(arr.tolist()) for u, arr in test_items.items()}
    for log in observed_logs:
        for user, item in zip(log.users, log.items):
            user = int(user)
            if user in observed:
                observed[user].add(int(item))
    candidates: Dict[int, np.ndarray] = {}
    all_items = np.arange(n_items, dtype=np.int64)
    for user in sorted(test_items):
        positives = test_items[user]
        pool = np.setdiff1d(all_items, np.fromiter(observed[user], dtype=np.int64,
                                                   count=len(observed[user])))
        need = max(0, candidate_size - len(positives))
        if need >= len(pool):
            sampled = pool
        else:
            rng = derived_rng(seed, "candidates", user)
            sampled = rng.choice(pool, size=need, replace=False)
        candidates[user] = np.concatenate([positives, sampled])
    return candidates


def make_bundle(log: InteractionLog, config: SplitConfig) -> SplitBundle:
    """Full split: outer train/test, validation hold-out, then candidates.

    Candidate negatives exclude every positive the user has anywhere
    (train, validation, and test) unless the config narrows exclusion to
    train only.
    """
    if config.method == "sbr":
        train, test = split_by_ratio(
            log, config.train_fraction, config.time_aware, config.level, config.seed
        )
    else:
        train, test = split_leave_one_out(log, config.time_aware, config.seed)
    inner_train, validation = hold_out_validation(train, config)
    if config.exclude_from_candidates == "all":
        observed = [inner_train, validation]
    else:
        observed = [inner_train]
    candidates = build_candidates(
        test, observed, log.n_items, config.candidate_size, config.seed
    )
    return SplitBundle(inner_train, validation, test, candidates)


def validation_bundle(bundle: SplitBundle, candidate_size: int, seed: int) -> SplitBundle:
    """Tuning view: validation plays the test role, test stays unread.

    Candidates are built from train + validation only, enforcing nested
    validation hygiene by construction.
    """
    candidates = build_candidates(
        bundle.validation, [bundle.train], bundle.train.n_items,
        candidate_size, seed,
    )
    empty = bundle.validation.take(np.empty(0, np.int64))
    return SplitBundle(bundle.train, empty, bundle.validation, candidates)


def save_bundle(bundle: SplitBundle, directory) -> None:
    """Persist a bundle: three record files, index maps, and candidates."""
    os.makedirs(directory, exist_ok=True)
    for name, part in (("train", bundle.train), ("validation", bundle.validation),
                       ("test", bundle.test)):
        write_log(part, os.path.join(directory, f"{name}.csv"))
    with open(os.path.join(directory, "users.txt"), "w", encoding="utf-8") as handle:
        handle.write("\n".join(bundle.train.user_ids) + "\n")
    with open(os.path.join(directory, "items.txt"), "w", encoding="utf-8") as handle:
        handle.write("\n".join(bundle.train.item_ids) + "\n")
    with open(os.path.join(directory, "candidates.txt"), "w", encoding="utf-8") as handle:
        for user in sorted(bundle.candidates):
            items = ",".join(str(i) for i in bundle.candidates[user])
            handle.write(f"{user}\t{items}\n")


def load_bundle(directory) -> SplitBundle:
    """Reload a persisted bundle with its original shared index maps."""
    with open(os.path.join(directory, "users.txt"), "r", encoding="utf-8") as handle:
        user_ids = [line.rstrip("\n") for line in handle if line.strip() != ""]
    with open(os.path.join(directory, "items.txt"), "r", encoding="utf-8") as handle:
        item_ids = [line.rstrip("\n") for line in handle if line.strip() != ""]
    user_index = {raw: idx for idx, raw in enumerate(user_ids)}
    item_index = {raw: idx for idx, raw in enumerate(item_ids)}

    def read_part(name):
        import csv as _csv

        users, items, values, timestamps = [], [], [], []
        has_ts = False
        with open(os.path.join(directory, f"{name}.csv"), encoding="utf-8", newline="") as f:
            for row in _csv.reader(f):
                if not row:
                    continue
                users.append(user_index[row[0]])
                items.append(item_index[row[1]])
                values.append(float(row[2]))
                if len(row) > 3:
                    has_ts = True
                    timestamps.append(int(row[3]))
        return InteractionLog(users, items, values, timestamps if has_ts else None,
                              user_ids, item_ids)

    candidates: Dict[int, np.ndarray] = {}
    with open(os.path.join(directory, "candidates.txt"), "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            user_str, items_str = line.split("\t")
            candidates[int(user_str)] = np.asarray(
                [int(tok) for tok in items_str.split(",") if tok != ""], dtype=np.int64
            )
    return SplitBundle(read_part("train"), read_part("validation"), read_part("test"),
                       candidates)

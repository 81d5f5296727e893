"""Shared fixture builders for the test suite."""

import numpy as np
import pytest

from rankbench.data import Interaction, InteractionLog


def make_log(records):
    """Log from (user, item[, value[, timestamp]]) tuples."""
    interactions = []
    for rec in records:
        user, item = rec[0], rec[1]
        value = rec[2] if len(rec) > 2 else 1.0
        timestamp = rec[3] if len(rec) > 3 else None
        interactions.append(Interaction(str(user), str(item), float(value), timestamp))
    return InteractionLog.from_interactions(interactions)


def random_log(rng, n_users=12, n_items=15, n_records=60, with_timestamps=True,
               max_value=5):
    """Random interaction log; (user, item) pairs may repeat."""
    records = []
    for pos in range(n_records):
        user = int(rng.integers(n_users))
        item = int(rng.integers(n_items))
        value = float(rng.integers(1, max_value + 1))
        ts = int(rng.integers(0, 10_000)) if with_timestamps else None
        records.append((f"u{user}", f"i{item}", value, ts))
    return make_log(records)


def two_community_log(n_users=200, n_items=200, base_degree=12, extra_degree=5,
                      seed=0):
    """Two disjoint user/item communities with >= base_degree per entity.

    Users in the first half interact only with first-half items, and
    likewise for the second half. A round-robin base layer guarantees every
    user and item at least ``base_degree`` interactions (a 10-filter-dense
    log for the defaults); random extras roughen the popularity profile.
    Timestamps are random, so a global time-aware split interleaves users.
    """
    assert n_users % 2 == 0 and n_items % 2 == 0
    rng = np.random.default_rng(seed)
    half_users, half_items = n_users // 2, n_items // 2
    records = []
    seen = set()
    for user in range(n_users):
        community = user // half_users
        item_base = community * half_items
        start = user % half_items
        items = [(start + k) % half_items + item_base for k in range(base_degree)]
        extras = rng.choice(half_items, size=extra_degree, replace=False) + item_base
        for item in list(items) + list(extras):
            if (user, item) in seen:
                continue
            seen.add((user, item))
            records.append((f"u{user}", f"i{item}", 1.0, int(rng.integers(0, 100_000))))
    return make_log(records)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

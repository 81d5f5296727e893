"""Splitter examples, invariants over randomized fixtures, and candidates."""

import numpy as np
import pytest

from rankbench.splitting import (
    SplitBundle,
    SplitConfig,
    build_candidates,
    hold_out_validation,
    load_bundle,
    make_bundle,
    save_bundle,
    split_by_ratio,
    split_leave_one_out,
    validation_bundle,
)

from conftest import make_log, random_log


def record_set(log):
    return sorted((r.user, r.item, r.value, r.timestamp) for r in log.interactions())


def test_global_time_aware_cut():
    log = make_log([("u1", f"i{k}", 1.0, k) for k in range(1, 11)])
    train, test = split_by_ratio(log, 0.8, time_aware=True, level="global")
    assert sorted(train.timestamps.tolist()) == list(range(1, 9))
    assert sorted(test.timestamps.tolist()) == [9, 10]


def test_ceiling_arithmetic_141_records(rng):
    log = random_log(rng, n_users=20, n_items=25, n_records=141)
    train, test = split_by_ratio(log, 0.8, time_aware=True, level="global")
    assert len(train) == 113          # ceil(0.8 * 141)
    assert len(test) == 28


def test_user_level_single_record_goes_to_train():
    log = make_log([("u1", "i1", 1.0, 5), ("u2", "i1", 1.0, 1), ("u2", "i2", 1.0, 2)])
    train, test = split_by_ratio(log, 0.8, time_aware=True, level="user")
    assert ("u1", "i1", 1.0, 5) in record_set(train)
    assert all(rec.user != "u1" for rec in test.interactions())


def test_loo_latest_record():
    log = make_log([("u1", "a", 1.0, 5), ("u1", "b", 1.0, 9), ("u1", "c", 1.0, 2)])
    train, test = split_leave_one_out(log, time_aware=True)
    assert [r.item for r in test.interactions()] == ["b"]
    assert len(train) == 2


def test_loo_single_record_user_stays_in_train():
    log = make_log([("u1", "a", 1.0, 1), ("u2", "a", 1.0, 1), ("u2", "b", 1.0, 2)])
    train, test = split_leave_one_out(log, time_aware=True)
    assert len(test) == 1
    assert test.interactions().__next__().user == "u2"


def test_loo_counts_three_users_four_records():
    records = [(f"u{u}", f"i{k}", 1.0, k) for u in range(3) for k in range(4)]
    log = make_log(records)
    train, test = split_leave_one_out(log, time_aware=True)
    assert len(test) == 3
    assert len(train) == 9


def test_loo_timestamp_tie_takes_last_occurrence():
    log = make_log([("u1", "a", 1.0, 7), ("u1", "b", 1.0, 7), ("u1", "c", 1.0, 3)])
    _, test = split_leave_one_out(log, time_aware=True)
    assert [r.item for r in test.interactions()] == ["b"]


def test_holdout_validation_latest_ten_percent():
    log = make_log([("u1", f"i{k}", 1.0, k) for k in range(100)])
    config = SplitConfig(method="sbr", time_aware=True, validation_fraction=0.1)
    inner, validation = hold_out_validation(log, config)
    assert len(validation) == 10
    assert sorted(validation.timestamps.tolist()) == list(range(90, 100))
    assert len(inner) == 90


def test_holdout_fraction_zero():
    log = make_log([("u1", "i1", 1.0, 1), ("u2", "i2", 1.0, 2)])
    config = SplitConfig(method="sbr", time_aware=True, validation_fraction=0.0)
    inner, validation = hold_out_validation(log, config)
    assert len(validation) == 0
    assert record_set(inner) == record_set(log)


def test_holdout_loo_single_record_user():
    log = make_log([("u1", "a", 1.0, 1), ("u2", "a", 1.0, 1), ("u2", "b", 1.0, 2)])
    config = SplitConfig(method="loo", time_aware=True)
    inner, validation = hold_out_validation(log, config)
    assert all(rec.user != "u1" for rec in validation.interactions())


def build_fixture(seed, n_users=15, n_items=30, n_records=120):
    local = np.random.default_rng(seed)
    return random_log(local, n_users=n_users, n_items=n_items, n_records=n_records)


def test_candidate_size_arithmetic_large_pool():
    # 1500 items; user has 20 train + 5 test positives -> 995 sampled negatives
    records = [("u0", f"i{k}", 1.0, k) for k in range(25)]
    records += [("pad", f"i{k}", 1.0, 0) for k in range(25, 1500)]
    log = make_log(records)
    train = log.take(np.arange(0, 20))
    test = log.take(np.arange(20, 25))
    candidates = build_candidates(test, [train], log.n_items, 1000, seed=7)
    assert len(candidates[0]) == 1000
    test_items = set(test.items.tolist())
    assert test_items <= set(candidates[0].tolist())


def test_candidate_pool_exhaustion():
    # 600 items, 25 observed by the user -> pool 575 < 995 -> 5 + 575 = 580
    records = [("u0", f"i{k}", 1.0, k) for k in range(25)]
    records += [("pad", f"i{k}", 1.0, 0) for k in range(25, 600)]
    log = make_log(records)
    train = log.take(np.arange(0, 20))
    test = log.take(np.arange(20, 25))
    candidates = build_candidates(test, [train], log.n_items, 1000, seed=7)
    assert len(candidates[0]) == 580


def test_candidate_full_catalog_limit():
    records = [("u0", f"i{k}", 1.0, k) for k in range(10)]
    records += [("pad", f"i{k}", 1.0, 0) for k in range(10, 40)]
    log = make_log(records)
    train = log.take(np.arange(0, 7))
    test = log.take(np.arange(7, 10))
    candidates = build_candidates(test, [train], log.n_items, log.n_items, seed=3)
    # full catalog minus the user's train positives, plus her test positives
    assert len(candidates[0]) == log.n_items - 7
    assert set(train.items[train.users == 0].tolist()).isdisjoint(candidates[0].tolist())


@pytest.mark.parametrize("seed", range(100))
def test_split_invariants_random_fixtures(seed):
    log = build_fixture(seed)
    config = SplitConfig(
        method="sbr" if seed % 2 == 0 else "loo",
        time_aware=(seed % 4 < 2),
        level="global" if seed % 3 else "user",
        candidate_size=20,
        seed=seed,
    )
    bundle = make_bundle(log, config)
    train, validation, test = bundle.train, bundle.validation, bundle.test

    # partition: counts add up
    assert len(train) + len(validation) + len(test) == len(log)

    # time-aware boundaries
    if config.time_aware and config.method == "sbr" and config.level == "global":
        outer_train_ts = np.concatenate([train.timestamps, validation.timestamps])
        if len(test) and len(outer_train_ts):
            assert outer_train_ts.max() <= test.timestamps.min()
    if config.time_aware and config.method == "loo":
        for user in np.unique(test.users):
            user_test_ts = test.timestamps[test.users == user].min()
            outer = np.concatenate([
                train.timestamps[train.users == user],
                validation.timestamps[validation.users == user],
            ])
            assert user_test_ts >= outer.max()

    # candidate hygiene and size
    observed_by_user = {}
    for part in (train, validation):
        for user, item in zip(part.users, part.items):
            observed_by_user.setdefault(int(user), set()).add(int(item))
    test_by_user = {}
    for user, item in zip(test.users, test.items):
        test_by_user.setdefault(int(user), set()).add(int(item))
    for user, test_items in test_by_user.items():
        cands = bundle.candidates[user]
        assert len(set(cands.tolist())) == len(cands)
        assert test_items <= set(cands.tolist())
        negatives = set(cands.tolist()) - test_items
        assert negatives.isdisjoint(observed_by_user.get(user, set()))
        pool = log.n_items - len(observed_by_user.get(user, set()) | test_items)
        assert len(cands) == min(config.candidate_size, pool + len(test_items))


def test_split_deterministic_given_seed():
    log = build_fixture(99)
    config = SplitConfig(method="sbr", time_aware=False, candidate_size=15, seed=5)
    first = make_bundle(log, config)
    second = make_bundle(log, config)
    for a, b in ((first.train, second.train), (first.validation, second.validation),
                 (first.test, second.test)):
        assert np.array_equal(a.users, b.users)
        assert np.array_equal(a.items, b.items)
    assert first.candidates.keys() == second.candidates.keys()
    for user in first.candidates:
        assert np.array_equal(first.candidates[user], second.candidates[user])


def test_bundle_save_load_round_trip(tmp_path):
    log = build_fixture(7)
    config = SplitConfig(method="loo", time_aware=True, candidate_size=12, seed=3)
    bundle = make_bundle(log, config)
    save_bundle(bundle, tmp_path / "split")
    loaded = load_bundle(tmp_path / "split")
    assert record_set(loaded.train) == record_set(bundle.train)
    assert record_set(loaded.test) == record_set(bundle.test)
    assert loaded.candidates.keys() == bundle.candidates.keys()
    for user in bundle.candidates:
        assert np.array_equal(loaded.candidates[user], bundle.candidates[user])


def test_validation_bundle_never_reads_test():
    log = build_fixture(11)
    config = SplitConfig(method="sbr", time_aware=False, candidate_size=18, seed=2)
    bundle = make_bundle(log, config)
    view = validation_bundle(bundle, candidate_size=18, seed=4)
    assert record_set(view.test) == record_set(bundle.validation)
    assert len(view.validation) == 0
    # view candidates exist exactly for validation users
    val_users = set(int(u) for u in bundle.validation.users)
    assert set(view.candidates.keys()) == val_users


def test_split_config_tokens():
    assert SplitConfig.from_token("tsbr").time_aware
    assert SplitConfig.from_token("rloo").method == "loo"
    assert SplitConfig.from_token("rsbr").token == "rsbr"
    with pytest.raises(ValueError):
        SplitConfig.from_token("xyz")

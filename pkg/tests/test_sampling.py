"""Sampler distribution checks against exact weight calculations."""

import numpy as np
import pytest
from scipy.stats import chisquare

from rankbench.sampling import (
    PopularityTable,
    SamplerConfig,
    sample_negatives,
)

from conftest import make_log


def empirical_frequencies(config, counts, positives, n_draws, seed=0):
    table = PopularityTable(np.asarray(counts, dtype=float),
                            config.popularity_exponent)
    rng = np.random.default_rng(seed)
    draws = sample_negatives(positives, n_draws, table, config, rng)
    return np.bincount(draws, minlength=len(counts))


def expected_probabilities(kind, counts, positives, exponent=1.0):
    counts = np.asarray(counts, dtype=float)
    if kind == "uniform":
        weights = np.ones(len(counts))
    elif kind == "high":
        weights = np.maximum(counts, 0.5) ** exponent
    else:
        weights = 1.0 / (counts + 1.0) ** exponent
    weights = weights.copy()
    for pos in positives:
        weights[pos] = 0.0
    return weights / weights.sum()


def test_high_popularity_weights_nine_to_one():
    # two unobserved items with counts 9 and 1: probabilities 0.9 / 0.1
    counts = [9, 1, 4]
    config = SamplerConfig(kind="high_pop")
    freqs = empirical_frequencies(config, counts, {2}, 100_000)
    probs = freqs / freqs.sum()
    assert probs[0] == pytest.approx(0.9, abs=0.01)
    assert probs[1] == pytest.approx(0.1, abs=0.01)
    assert freqs[2] == 0


def test_low_popularity_weights_inverse():
    # counts 9 and 1 -> weights 1/10 and 1/2 -> probabilities 1/6 and 5/6
    counts = [9, 1, 4]
    config = SamplerConfig(kind="low_pop")
    freqs = empirical_frequencies(config, counts, {2}, 100_000)
    probs = freqs / freqs.sum()
    assert probs[0] == pytest.approx(1 / 6, abs=0.01)
    assert probs[1] == pytest.approx(5 / 6, abs=0.01)


def test_uniform_equal_probability():
    counts = [5, 1, 9, 3]
    config = SamplerConfig(kind="uniform")
    freqs = empirical_frequencies(config, counts, set(), 100_000)
    assert np.allclose(freqs / freqs.sum(), 0.25, atol=0.01)


@pytest.mark.parametrize("kind", ["uniform", "high_pop", "low_pop",
                                  "uniform_high_pop", "uniform_low_pop"])
def test_chi_square_law(kind):
    # empirical frequencies over 1e5 draws match the configured distribution
    counts = [12, 7, 3, 3, 1, 0, 25, 9]
    positives = {3, 6}
    config = SamplerConfig(kind=kind)
    n_draws = 100_000
    freqs = empirical_frequencies(config, counts, positives, n_draws, seed=42)
    if kind.startswith("uniform_") :
        half = n_draws // 2
        pop = "high" if kind.endswith("high_pop") else "low"
        expected = (expected_probabilities("uniform", counts, positives) * (n_draws - half)
                    + expected_probabilities(pop, counts, positives) * half)
    else:
        base = {"uniform": "uniform", "high_pop": "high", "low_pop": "low"}[kind]
        expected = expected_probabilities(base, counts, positives) * n_draws
    keep = expected > 0
    _, p_value = chisquare(freqs[keep], expected[keep])
    assert p_value > 0.01


def test_no_positive_ever_sampled():
    counts = [4, 4, 4, 4, 4, 4]
    positives = {0, 2, 4}
    for kind in ("uniform", "high_pop", "low_pop", "uniform_high_pop"):
        config = SamplerConfig(kind=kind)
        table = PopularityTable(np.asarray(counts, float), 1.0)
        rng = np.random.default_rng(11)
        for _ in range(50):
            draws = sample_negatives(positives, 8, table, config, rng)
            assert positives.isdisjoint(draws.tolist())


def test_monotonicity_in_popularity():
    counts = [1, 3, 7, 15, 40]
    high = empirical_frequencies(SamplerConfig(kind="high_pop"), counts, set(),
                                 200_000, seed=8)
    assert np.all(np.diff(high) > 0)
    low = empirical_frequencies(SamplerConfig(kind="low_pop"), counts, set(),
                                200_000, seed=8)
    assert np.all(np.diff(low) < 0)


def test_hybrid_with_zero_exponent_degenerates_to_uniform():
    counts = [12, 7, 3, 5, 1, 25, 9, 2]
    config = SamplerConfig(kind="uniform_high_pop", popularity_exponent=0.0)
    n_draws = 100_000
    freqs = empirical_frequencies(config, counts, set(), n_draws, seed=13)
    expected = np.full(len(counts), n_draws / len(counts))
    _, p_value = chisquare(freqs, expected)
    assert p_value > 0.01


def test_all_items_observed_errors():
    table = PopularityTable(np.array([3.0, 2.0]), 1.0)
    with pytest.raises(ValueError, match="no negatives available"):
        sample_negatives({0, 1}, 1, table, SamplerConfig(), np.random.default_rng(0))


def test_dense_user_falls_back_to_complement():
    # one free item among 400: rejection stalls, the fallback still only
    # returns that item
    n = 400
    table = PopularityTable(np.ones(n), 1.0)
    positives = set(range(n - 1))
    draws = sample_negatives(positives, 5, table, SamplerConfig(kind="low_pop"),
                             np.random.default_rng(3))
    assert set(draws.tolist()) == {n - 1}


def test_popularity_table_from_log():
    log = make_log([("u1", "i1"), ("u2", "i1"), ("u1", "i2")])
    table = PopularityTable.from_log(log, 1.0)
    assert table.counts.tolist() == [2.0, 1.0]


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(kind="bogus")
    with pytest.raises(ValueError):
        SamplerConfig(negatives_per_positive=0)
    with pytest.raises(ValueError):
        SamplerConfig(popularity_exponent=-1.0)

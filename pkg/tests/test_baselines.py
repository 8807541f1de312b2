from collections import Counter

import numpy as np
import pytest

from gabigan.baselines import (
    SMALL_FILTERS,
    SMALL_NEURONS,
    BaselineVariant,
    count_slot_total,
    large_set,
    locate_count_slot,
    mutate_with_counts,
    run_baseline_ga,
    run_random_search,
    sample_count_matrix,
    sample_counts,
    small_set,
)
from gabigan.evaluator import SurrogateFitness, default_surrogate
from gabigan.ga import GaConfig
from gabigan.genome import Candidate, ContinuousParams, SearchLimits, random_genome, validate


def test_small_set_draws_only_listed_values(limits):
    m = sample_count_matrix(small_set(), limits, 3000, np.random.default_rng(0))
    assert set(m[:, :3].ravel()) == set(SMALL_FILTERS)
    assert set(m[:, 3:].ravel()) == set(SMALL_NEURONS)


def test_large_set_covers_its_range_uniformly(limits):
    m = sample_count_matrix(large_set(), limits, 20000, np.random.default_rng(0))
    neurons = m[:, 3:].ravel()
    assert neurons.min() >= 16 and neurons.max() <= 4096
    # deciles of a uniform draw
    hist, _ = np.histogram(neurons, bins=10, range=(16, 4097))
    assert hist.min() > 0.9 * len(neurons) / 10
    assert large_set().contains(sample_counts(large_set(), limits, np.random.default_rng(1)))


def test_variant_validation_and_round_trip():
    with pytest.raises(ValueError):
        BaselineVariant("medium_set")
    with pytest.raises(ValueError):
        small_set(neuron_choices=())
    v = small_set(neuron_choices=(8, 16))
    assert BaselineVariant.from_dict(v.to_dict()) == v
    assert v.envelope() == ((1, 256), (8, 16))


def test_count_slots_extend_every_layer(limits):
    assert count_slot_total(limits) == 6 * 3 + 5 * 3
    names = [locate_count_slot(i, limits) for i in range(1, count_slot_total(limits) + 1)]
    assert [s.name for s in names[:6]] == ["exists", "kernel_size", "activation", "batch_norm",
                                           "max_pool", "filters"]
    assert names[-1].name == "neurons" and names[-1].layer == 3
    with pytest.raises(IndexError):
        locate_count_slot(34, limits)


def test_count_mutation_hits_counts_at_the_expected_rate(limits):
    variant = small_set()
    lim = variant.limits_for(limits)
    rng = np.random.default_rng(2)
    base = Candidate(random_genome(lim, rng), sample_counts(variant, lim, rng))
    kinds = Counter()
    for _ in range(6600):
        child = mutate_with_counts(base, variant, lim, rng)
        assert validate(child.genome, lim) == []
        assert variant.contains(child.params)
        if child.params != base.params:
            kinds["count"] += 1
    # 6 of 33 slots are counts; a resample keeps the old value 1/5 or 1/9 of the time
    expected = 6600 * (3 / 33 * 4 / 5 + 3 / 33 * 8 / 9)
    assert kinds["count"] == pytest.approx(expected, rel=0.1)


def surrogate(limits):
    return SurrogateFitness(default_surrogate(limits))


@pytest.mark.parametrize("variant", [small_set(), large_set()])
def test_baseline_ga_keeps_counts_inside_the_variant(limits, variant):
    h = run_baseline_ga(variant, GaConfig(n_m=10, generations=5), limits, surrogate(limits), 0)
    assert h.method == variant.kind
    assert len(h.records) == 5
    assert h.total_evaluations == 50
    for r in h.records:
        for c in r.candidates:
            assert variant.contains(c.params)


def test_random_search_budget_and_monotone_incumbent(limits):
    h = run_random_search(95, limits, large_set(), surrogate(limits), seed=1, batch_size=10)
    assert h.total_evaluations == 95
    assert len(h.records) == 10 and len(h.records[-1].candidates) == 5
    best = h.running_best()
    assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))


def test_keep_best_mode_matches_keep_all(limits):
    f = surrogate(limits)
    full = run_random_search(200, limits, large_set(), f, seed=5, batch_size=20)
    lean = run_random_search(200, limits, large_set(), f, seed=5, batch_size=20, keep="best")
    assert lean.best_fitness == pytest.approx(full.best_fitness, abs=1e-12)
    assert lean.best_candidate() == full.best_candidate()
    assert all(not r.candidates for r in lean.records)


def test_random_search_is_reproducible(limits):
    f = surrogate(limits)
    a = run_random_search(50, limits, small_set(), f, seed=2)
    b = run_random_search(50, limits, small_set(), f, seed=2)
    assert a.jsonl_lines() == b.jsonl_lines()


def test_random_search_rejects_bad_arguments(limits):
    with pytest.raises(ValueError):
        run_random_search(0, limits, large_set(), surrogate(limits), 0)
    with pytest.raises(ValueError):
        run_random_search(5, limits, large_set(), surrogate(limits), 0, keep="some")

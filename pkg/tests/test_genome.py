import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gabigan.genome import (
    ACTIVATIONS,
    CONV_FIELDS,
    DENSE_FIELDS,
    Candidate,
    ContinuousParams,
    ConvLayerGene,
    DenseLayerGene,
    Genome,
    SearchLimits,
    genome_from_indices,
    genome_to_indices,
    locate_slot,
    param_slot_count,
    random_genome,
    random_genome_indices,
    repair,
    slot_choice_counts,
    validate,
    validate_params,
)


def test_slot_count_is_five_per_conv_four_per_dense():
    assert param_slot_count(SearchLimits(C=3, D=3)) == 27
    assert param_slot_count(SearchLimits(C=2, D=5)) == 30


def test_locate_slot_covers_every_field_exactly_once():
    limits = SearchLimits(C=2, D=3)
    slots = [locate_slot(i, limits) for i in range(1, param_slot_count(limits) + 1)]
    expected = ([("conv", j, f) for j in (1, 2) for f in CONV_FIELDS]
                + [("dense", j, f) for j in (1, 2, 3) for f in DENSE_FIELDS])
    assert [tuple(s) for s in slots] == expected


@pytest.mark.parametrize("index", [0, 28, -1])
def test_locate_slot_rejects_out_of_range(limits, index):
    with pytest.raises(IndexError):
        locate_slot(index, limits)


def test_repair_turns_on_first_layer():
    conv = tuple(ConvLayerGene(False, 3, "relu", False, False) for _ in range(2))
    dense = tuple(DenseLayerGene(False, "tanh", False, False) for _ in range(2))
    g = repair(Genome(conv, dense))
    assert g.active_conv() == [0] and g.active_dense() == [0]
    assert validate(g, SearchLimits(C=2, D=2)) == []


def test_validate_names_each_problem(limits):
    g = random_genome(limits, np.random.default_rng(0))
    bad = Genome(
        tuple(ConvLayerGene(False, 7, "relu", False, False) for _ in range(3)),
        g.dense[:2],
    )
    problems = validate(bad, limits)
    assert "no active conv layer" in problems
    assert any("kernel_size" in p for p in problems)
    assert any("dense: expected 3" in p for p in problems)


def test_validate_rejects_int_where_flag_expected(limits):
    g = random_genome(limits, np.random.default_rng(0))
    conv = (ConvLayerGene(True, 3, "relu", 1, False),) + g.conv[1:]
    assert any("batch_norm" in p for p in validate(Genome(conv, g.dense), limits))


def test_random_genomes_are_valid(limits):
    rng = np.random.default_rng(5)
    for _ in range(500):
        assert validate(random_genome(limits, rng), limits) == []


def test_activation_frequencies_are_uniform(limits):
    # chi-square goodness of fit over 4 categories; 16.27 is the p=0.001 critical value at 3 dof
    rng = np.random.default_rng(11)
    counts = dict.fromkeys(ACTIVATIONS, 0)
    for _ in range(2000):
        for gene in random_genome(limits, rng).dense:
            counts[gene.activation] += 1
    total = sum(counts.values())
    chi2 = sum((c - total / 4) ** 2 / (total / 4) for c in counts.values())
    assert chi2 < 16.27


def test_index_codec_enumerates_the_whole_one_layer_space():
    limits = SearchLimits(C=1, D=1)
    counts = slot_choice_counts(limits)
    assert int(np.prod(counts)) == 2 * 2 * 4 * 2 * 2 * 2 * 4 * 2 * 2
    seen = set()
    for combo in itertools.product(*[range(c) for c in counts]):
        g = genome_from_indices(combo, limits)
        assert tuple(genome_to_indices(g, limits)) == combo
        seen.add(g)
    assert len(seen) == 2048
    assert sum(1 for g in seen if validate(g, limits) == []) == 512


def test_vectorised_sampler_repairs_dead_blocks(limits):
    idx = random_genome_indices(limits, 5000, np.random.default_rng(3))
    for row in idx[:300]:
        assert validate(genome_from_indices(row, limits), limits) == []
    # roughly 1/8 of blocks would be empty without repair; first layer absorbs them
    conv_first_on = idx[:, 0].mean()
    assert conv_first_on == pytest.approx(0.5 + 0.5 * 0.25, abs=0.03)


genome_strategy = st.builds(
    lambda seed, c, d: random_genome(SearchLimits(C=c, D=d), np.random.default_rng(seed)),
    st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4),
)


@settings(max_examples=60, deadline=None)
@given(genome_strategy)
def test_dict_round_trip(g):
    assert Genome.from_dict(g.to_dict()) == g


@settings(max_examples=60, deadline=None)
@given(genome_strategy)
def test_indices_round_trip(g):
    limits = SearchLimits(C=len(g.conv), D=len(g.dense))
    assert genome_from_indices(genome_to_indices(g, limits), limits) == g


def test_candidate_round_trip_ignores_fitness_in_equality(limits):
    from gabigan.evaluator import FitnessReport

    g = random_genome(limits, np.random.default_rng(2))
    c = Candidate(g, ContinuousParams((1, 2, 3), (10, 20, 30)), FitnessReport(0.5, 3, 0.1))
    back = Candidate.from_dict(c.to_dict())
    assert back == c
    assert back.fitness.accuracy == 0.5 and back.fitness.epochs_run == 3


def test_param_validation(limits):
    assert validate_params(ContinuousParams((1, 128, 256), (10, 2005, 4000)), limits) == []
    problems = validate_params(ContinuousParams((0, 1), (10, 4001, 5)), limits)
    assert any("filters: expected 3" in p for p in problems)
    assert any("filters[1]: 0" in p for p in problems)
    assert any("neurons[2]: 4001" in p for p in problems)


@pytest.mark.parametrize("kw, msg", [
    ({"C": 0}, "C must be"),
    ({"filter_bounds": (0, 5)}, "minimum must be"),
    ({"neuron_bounds": (100, 100)}, "must be below"),
])
def test_limits_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        SearchLimits(**kw)


def test_limits_round_trip():
    limits = SearchLimits(C=2, D=4, filter_bounds=(2, 64), kernel_sizes=(3,))
    assert SearchLimits.from_dict(limits.to_dict()) == limits
    assert limits.count_bounds == [(2, 64)] * 2 + [(10, 4000)] * 4
    assert math.isclose(len(limits.count_bounds), 6)

"""Comparison methods: small-set GA, large-set GA and random search.

The GA baselines reuse the generational loop of the proposed method, but
filter and neuron counts are ordinary genes: each conv block carries a
filter-count gene and each dense block a neuron-count gene, so the
mutation slot space grows to ``6*C + 5*D``.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from gabigan.evaluator import FitnessReport, evaluate_all, stream
from gabigan.ga import GaConfig, crossover, mutate_slot, run_generations
from gabigan.genome import (
    CONV_FIELDS,
    DENSE_FIELDS,
    Candidate,
    ContinuousParams,
    SearchLimits,
    Slot,
    genome_from_indices,
    random_genome_indices,
)
from gabigan.history import GenerationRecord, RunHistory

SMALL_NEURONS = (16, 32, 64, 128, 256, 512, 1024, 2048, 4096)
SMALL_FILTERS = (1, 4, 16, 64, 256)
LARGE_NEURONS = (16, 4096)
LARGE_FILTERS = (1, 256)

RANDOM_STREAM = 5


@dataclass(frozen=True)
class BaselineVariant:
    kind: str = "small_set"
    neuron_choices: tuple[int, ...] = SMALL_NEURONS
    filter_choices: tuple[int, ...] = SMALL_FILTERS
    neuron_range: tuple[int, int] = LARGE_NEURONS
    filter_range: tuple[int, int] = LARGE_FILTERS

    def __post_init__(self):
        if self.kind not in ("small_set", "large_set"):
            raise ValueError(f"unknown baseline variant {self.kind!r}")
        if not self.neuron_choices or not self.filter_choices:
            raise ValueError("choice sets must be non-empty")
        for lo, hi in (self.neuron_range, self.filter_range):
            if not 1 <= lo <= hi:
                raise ValueError("count ranges need 1 <= min <= max")

    def envelope(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """(filter_bounds, neuron_bounds) covering every count this variant can produce."""
        if self.kind == "small_set":
            return ((min(self.filter_choices), max(self.filter_choices)),
                    (min(self.neuron_choices), max(self.neuron_choices)))
        return tuple(self.filter_range), tuple(self.neuron_range)

    def limits_for(self, limits: SearchLimits) -> SearchLimits:
        f, n = self.envelope()
        return replace(limits, filter_bounds=f, neuron_bounds=n)

    def contains(self, params: ContinuousParams) -> bool:
        if self.kind == "small_set":
            return (all(v in self.filter_choices for v in params.filters)
                    and all(v in self.neuron_choices for v in params.neurons))
        (flo, fhi), (nlo, nhi) = self.filter_range, self.neuron_range
        return (all(flo <= v <= fhi for v in params.filters)
                and all(nlo <= v <= nhi for v in params.neurons))

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("neuron_choices", "filter_choices", "neuron_range", "filter_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def small_set(**kw) -> BaselineVariant:
    return BaselineVariant("small_set", **kw)


def large_set(**kw) -> BaselineVariant:
    return BaselineVariant("large_set", **kw)


def _draw(variant: BaselineVariant, block: str, size, rng: np.random.Generator) -> np.ndarray:
    if variant.kind == "small_set":
        choices = np.asarray(variant.filter_choices if block == "conv" else variant.neuron_choices)
        return choices[rng.integers(len(choices), size=size)]
    lo, hi = variant.filter_range if block == "conv" else variant.neuron_range
    return rng.integers(lo, hi + 1, size=size)


def sample_count_matrix(variant: BaselineVariant, limits: SearchLimits, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    """``(n, C + D)`` counts: filter columns first, then neuron columns."""
    return np.hstack([_draw(variant, "conv", (n, limits.C), rng),
                      _draw(variant, "dense", (n, limits.D), rng)])


def sample_counts(variant: BaselineVariant, limits: SearchLimits,
                  rng: np.random.Generator) -> ContinuousParams:
    return ContinuousParams.from_list(sample_count_matrix(variant, limits, 1, rng)[0], limits.C)


def count_slot_total(limits: SearchLimits) -> int:
    return (len(CONV_FIELDS) + 1) * limits.C + (len(DENSE_FIELDS) + 1) * limits.D


def locate_count_slot(index: int, limits: SearchLimits) -> Slot:
    """Slot ordering with the count gene appended to every layer block."""
    n = count_slot_total(limits)
    if not 1 <= index <= n:
        raise IndexError(f"slot index {index} outside [1, {n}]")
    i = index - 1
    conv_fields = CONV_FIELDS + ("filters",)
    dense_fields = DENSE_FIELDS + ("neurons",)
    if i < len(conv_fields) * limits.C:
        layer, f = divmod(i, len(conv_fields))
        return Slot("conv", layer + 1, conv_fields[f])
    layer, f = divmod(i - len(conv_fields) * limits.C, len(dense_fields))
    return Slot("dense", layer + 1, dense_fields[f])


def _genome_slot_index(slot: Slot, limits: SearchLimits) -> int:
    if slot.kind == "conv":
        return len(CONV_FIELDS) * (slot.layer - 1) + CONV_FIELDS.index(slot.name) + 1
    return (len(CONV_FIELDS) * limits.C + len(DENSE_FIELDS) * (slot.layer - 1)
            + DENSE_FIELDS.index(slot.name) + 1)


def mutate_with_counts(cand: Candidate, variant: BaselineVariant, limits: SearchLimits,
                       rng: np.random.Generator) -> Candidate:
    index = int(rng.integers(1, count_slot_total(limits) + 1))
    slot = locate_count_slot(index, limits)
    if slot.name == "filters":
        filters = list(cand.params.filters)
        filters[slot.layer - 1] = int(_draw(variant, "conv", None, rng))
        return replace(cand, params=replace(cand.params, filters=tuple(filters)))
    if slot.name == "neurons":
        neurons = list(cand.params.neurons)
        neurons[slot.layer - 1] = int(_draw(variant, "dense", None, rng))
        return replace(cand, params=replace(cand.params, neurons=tuple(neurons)))
    genome = mutate_slot(cand.genome, _genome_slot_index(slot, limits), limits, rng)
    return replace(cand, genome=genome)


class GeneCounts:
    """Count source for the GA baselines: counts are genes, no Bi-GAN."""

    def __init__(self, variant: BaselineVariant, limits: SearchLimits):
        self.variant = variant
        self.limits = limits
        self.name = variant.kind

    def initial_params(self, rng) -> ContinuousParams:
        return sample_counts(self.variant, self.limits, rng)

    def refresh(self, population, generation, fitness, workers, iterations, frozen=frozenset()):
        return population, [], 0

    def observe(self, evaluated) -> None:
        pass

    def crossover(self, a, b, rng):
        return crossover(a, b, rng)

    def mutate(self, cand, rng):
        return mutate_with_counts(cand, self.variant, self.limits, rng)


def run_baseline_ga(variant: BaselineVariant, cfg: GaConfig, limits: SearchLimits, fitness,
                    seed: int, workers: int = 1, config_snapshot: Optional[dict] = None,
                    on_generation=None) -> RunHistory:
    limits = variant.limits_for(limits)
    return run_generations(cfg, limits, fitness, GeneCounts(variant, limits), seed,
                           variant.kind, config_snapshot, workers, on_generation)


def run_random_search(budget_evals: int, limits: SearchLimits, variant: BaselineVariant,
                      fitness, seed: int, batch_size: int = 10, keep: str = "all",
                      workers: int = 1, config_snapshot: Optional[dict] = None,
                      on_generation=None) -> RunHistory:
    """Independent uniform candidates in batches of ``batch_size``.

    Every batch record carries the running best candidate, so ``best_fitness``
    never decreases.  With ``keep="best"`` only per-batch statistics and that
    incumbent are recorded; a fitness exposing ``score_batch`` is then scored
    vectorised, which makes budgets of millions of surrogate evaluations cheap.
    """
    if budget_evals < 1:
        raise ValueError("budget must be at least 1")
    if keep not in ("all", "best"):
        raise ValueError("keep must be 'all' or 'best'")
    limits = variant.limits_for(limits)
    rng = stream(seed, RANDOM_STREAM)
    history = RunHistory("random", config_snapshot or {})
    start = time.perf_counter()
    incumbent: Optional[Candidate] = None
    done = 0
    batch = 0
    vectorised = keep == "best" and hasattr(fitness, "score_batch")
    while done < budget_evals:
        n = min(batch_size, budget_evals - done)
        batch += 1
        idx = random_genome_indices(limits, n, rng)
        counts = sample_count_matrix(variant, limits, n, rng)
        if vectorised:
            scores = fitness.score_batch(idx, counts, limits)
            i = int(np.argmax(scores))
            best = Candidate(genome_from_indices(idx[i], limits),
                             ContinuousParams.from_list(counts[i], limits.C),
                             FitnessReport(float(scores[i]), 0, 0.0, 1.0 - float(scores[i])))
            summary = {"mean_fitness": float(scores.mean()),
                       "mean_loss": float(1.0 - scores.mean())}
            evaluated = []
        else:
            cands = [Candidate(genome_from_indices(idx[i], limits),
                               ContinuousParams.from_list(counts[i], limits.C)) for i in range(n)]
            keys = [(seed, RANDOM_STREAM, batch, i) for i in range(n)]
            reports = evaluate_all(fitness, cands, keys, workers)
            evaluated = [c.with_fitness(r) for c, r in zip(cands, reports)]
            best = max(evaluated, key=lambda c: c.fitness.accuracy)
            losses = [c.fitness.loss for c in evaluated if c.fitness.loss is not None]
            summary = {"mean_fitness": float(np.mean([c.fitness.accuracy for c in evaluated])),
                       "mean_loss": float(np.mean(losses)) if losses else None}
        if incumbent is None or best.fitness.accuracy > incumbent.fitness.accuracy:
            incumbent = best
        done += n
        record = GenerationRecord(batch, evaluated if keep == "all" else [], n, 0,
                                  time.perf_counter() - start, [], incumbent=incumbent)
        if keep == "best":
            record.summary = {**summary, "best_fitness": incumbent.fitness.accuracy}
        history.append(record)
        if on_generation is not None:
            on_generation(record)
    history.total_seconds = time.perf_counter() - start
    return history

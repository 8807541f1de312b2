"""Genetic search over architecture genes with Bi-GAN supplied counts."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from gabigan import bigan
from gabigan.evaluator import FitnessReport, evaluate_all, stream
from gabigan.genome import (
    Candidate,
    ContinuousParams,
    Genome,
    SearchLimits,
    get_field,
    locate_slot,
    param_slot_count,
    random_genome,
    repair,
    set_field,
)
from gabigan.history import GenerationRecord, RunHistory

# rng stream tags: (seed, tag, ...) keys keep every consumer independent
GA_STREAM = 1
BIGAN_STREAM = 2
EVAL_STREAM = 3
BIGAN_EVAL_STREAM = 4


@dataclass(frozen=True)
class GaConfig:
    n_m: int = 25
    t: int = 4
    r: int = 2
    d: int = 1
    mutation_fraction: float = 0.2
    generations: Optional[int] = 10
    budget_seconds: Optional[float] = None
    budget_evals: Optional[int] = None
    bigan_iters_per_gen: int = 1
    elitism: bool = False

    def __post_init__(self):
        problems = []
        if self.n_m < 2:
            problems.append("n_m must be >= 2")
        if self.t < 0 or self.r < 0 or self.d < 0:
            problems.append("t, r and d must be non-negative")
        if self.t + self.r - self.d < 2:
            problems.append("t + r - d must be >= 2")
        if self.t + self.r > self.n_m:
            problems.append("t + r cannot exceed n_m")
        if not 0.0 <= self.mutation_fraction <= 1.0:
            problems.append("mutation_fraction must lie in [0, 1]")
        if self.generations is None and self.budget_seconds is None and self.budget_evals is None:
            problems.append("set generations or a budget")
        if self.generations is not None and self.generations < 1:
            problems.append("generations must be positive")
        for name in ("budget_seconds", "budget_evals"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                problems.append(f"{name} must be positive")
        if self.bigan_iters_per_gen < 0:
            problems.append("bigan_iters_per_gen must be non-negative")
        if problems:
            raise ValueError("invalid GA config: " + "; ".join(problems))

    def to_dict(self):
        return asdict(self)


def select_parents(scores: Sequence[float], cfg: GaConfig, rng: np.random.Generator) -> list[int]:
    """Top ``t`` by score (ties: lower index first), ``r`` random others, minus ``d`` random."""
    if len(scores) != cfg.n_m:
        raise ValueError(f"expected {cfg.n_m} scores, got {len(scores)}")
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    top, rest = ranked[:cfg.t], sorted(ranked[cfg.t:])
    picked = [rest[i] for i in rng.choice(len(rest), size=cfg.r, replace=False)] if cfg.r else []
    pool = top + picked
    dropped = set(rng.choice(len(pool), size=cfg.d, replace=False).tolist()) if cfg.d else set()
    return [p for i, p in enumerate(pool) if i not in dropped]


def pair_parents(pool: Sequence[int], n_m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Usage-counter pairing: always draw from the least-used parents.

    Two parents at the lowest counter are picked at random; when only one
    parent remains at that level it is paired with a random parent from the
    next level up.
    """
    pool = list(pool)
    if len(pool) < 2:
        raise ValueError("need at least two parents")
    counter = {p: 0 for p in pool}
    pairs = []
    while len(pairs) < n_m:
        low = min(counter.values())
        level = [p for p in pool if counter[p] == low]
        if len(level) >= 2:
            i, j = rng.choice(len(level), size=2, replace=False)
            a, b = level[i], level[j]
        else:
            a = level[0]
            nxt = min(v for p, v in counter.items() if p != a)
            others = [p for p in pool if p != a and counter[p] == nxt]
            b = others[int(rng.integers(len(others)))]
        counter[a] += 1
        counter[b] += 1
        pairs.append((a, b))
    return pairs


def crossover_at(a: Candidate, b: Candidate, id1: int, id2: int) -> Candidate:
    """Child takes layers ``1..id1`` / ``1..id2`` from ``a`` and the rest from ``b``.

    Counts travel with their layers.
    """
    conv = a.genome.conv[:id1] + b.genome.conv[id1:]
    dense = a.genome.dense[:id2] + b.genome.dense[id2:]
    params = ContinuousParams(a.params.filters[:id1] + b.params.filters[id1:],
                              a.params.neurons[:id2] + b.params.neurons[id2:])
    return Candidate(repair(Genome(conv, dense)), params)


def crossover(a: Candidate, b: Candidate, rng: np.random.Generator) -> Candidate:
    C, D = len(a.genome.conv), len(a.genome.dense)
    id1 = int(rng.integers(1, C + 1))
    id2 = int(rng.integers(1, D + 1))
    return crossover_at(a, b, id1, id2)


def mutate_slot(genome: Genome, index: int, limits: SearchLimits,
                rng: np.random.Generator) -> Genome:
    slot = locate_slot(index, limits)
    current = get_field(genome, slot)
    options = [c for c in limits.choices(slot.kind, slot.name)
               if not (c == current and type(c) is type(current))]
    if not options:
        return genome
    value = options[int(rng.integers(len(options)))]
    return repair(set_field(genome, slot, value))


def mutate(genome: Genome, limits: SearchLimits, rng: np.random.Generator) -> Genome:
    """Resample one uniformly chosen slot to a different legal value."""
    index = int(rng.integers(1, param_slot_count(limits) + 1))
    return mutate_slot(genome, index, limits, rng)


def mutation_count(cfg: GaConfig) -> int:
    return min(cfg.n_m, math.ceil(cfg.mutation_fraction * cfg.n_m - 1e-9))


class BiGanCounts:
    """Count source for the proposed method: a Bi-GAN refreshed every generation.

    The Bi-GAN scores proposals on the best genome of the previous generation
    (the first candidate's genome before anything has been evaluated).
    """

    name = "proposed"

    def __init__(self, limits: SearchLimits, cfg: bigan.BiGanConfig, seed: int):
        self.limits = limits
        self.cfg = cfg
        self.seed = seed
        self.rng = stream(seed, BIGAN_STREAM)
        self.state = bigan.init_state(limits, cfg, self.rng)
        self.reference: Optional[Genome] = None

    def initial_params(self, rng) -> ContinuousParams:
        lo = [b[0] for b in self.limits.count_bounds]
        return ContinuousParams.from_list(lo, self.limits.C)

    def refresh(self, population: list[Candidate], generation: int, fitness, workers: int,
                iterations: int, frozen=frozenset()) -> tuple[list[Candidate], list[dict], int]:
        reference = self.reference or population[0].genome
        records = []
        for it in range(iterations):
            def fitness_many(p1, p2, it=it):
                cands = [Candidate(reference, p) for p in list(p1) + list(p2)]
                keys = [(self.seed, BIGAN_EVAL_STREAM, generation, it, j)
                        for j in range(len(cands))]
                reports = evaluate_all(fitness, cands, keys, workers)
                accs = [r.accuracy for r in reports]
                return accs[:len(p1)], accs[len(p1):]

            self.state, rec = bigan.bigan_iteration(self.state, None, self.cfg, self.rng,
                                                    fitness_many=fitness_many)
            records.append(rec.to_dict())
        stamped = [c if i in frozen else
                   replace(c, params=bigan.propose_params(self.state, self.rng, self.cfg.noise_dim))
                   for i, c in enumerate(population)]
        return stamped, records, 2 * self.cfg.m * iterations

    def observe(self, evaluated: list[Candidate]) -> None:
        self.reference = max(evaluated, key=lambda c: c.fitness.accuracy).genome

    def crossover(self, a, b, rng):
        return crossover(a, b, rng)

    def mutate(self, cand: Candidate, rng) -> Candidate:
        return replace(cand, genome=mutate(cand.genome, self.limits, rng))


def run_generations(cfg: GaConfig, limits: SearchLimits, fitness, source, seed: int,
                    method: str, config_snapshot: Optional[dict] = None, workers: int = 1,
                    on_generation: Optional[Callable[[GenerationRecord], None]] = None,
                    ) -> RunHistory:
    """Generational loop shared by the proposed method and the GA baselines."""
    rng = stream(seed, GA_STREAM)
    history = RunHistory(method, config_snapshot or {})
    population = [Candidate(random_genome(limits, rng), source.initial_params(rng))
                  for _ in range(cfg.n_m)]
    start = time.perf_counter()
    evals = 0
    generation = 0
    frozen: frozenset = frozenset()
    while True:
        if cfg.generations is not None and generation >= cfg.generations:
            break
        # budgets are checked between generations; the first always runs
        if generation and cfg.budget_evals is not None and evals >= cfg.budget_evals:
            break
        if (generation and cfg.budget_seconds is not None
                and time.perf_counter() - start >= cfg.budget_seconds):
            break
        generation += 1
        population, bigan_records, bigan_evals = source.refresh(
            population, generation, fitness, workers, cfg.bigan_iters_per_gen, frozen)
        keys = [(seed, EVAL_STREAM, generation, i) for i in range(len(population))]
        reports = evaluate_all(fitness, population, keys, workers)
        evaluated = [c.with_fitness(r) for c, r in zip(population, reports)]
        evals += len(evaluated) + bigan_evals
        record = GenerationRecord(generation, evaluated, len(evaluated), bigan_evals,
                                  time.perf_counter() - start, bigan_records)
        history.append(record)
        if on_generation is not None:
            on_generation(record)
        source.observe(evaluated)

        scores = [c.fitness.accuracy for c in evaluated]
        parents = select_parents(scores, cfg, rng)
        pairs = pair_parents(parents, cfg.n_m, rng)
        children = [source.crossover(evaluated[a], evaluated[b], rng) for a, b in pairs]
        for i in sorted(rng.choice(cfg.n_m, size=mutation_count(cfg), replace=False).tolist()):
            children[i] = source.mutate(children[i], rng)
        if cfg.elitism:
            best = max(evaluated, key=lambda c: c.fitness.accuracy)
            children[0] = Candidate(best.genome, best.params)
            frozen = frozenset({0})
        population = children
    history.total_seconds = time.perf_counter() - start
    return history


def evolve(cfg: GaConfig, limits: SearchLimits, fitness, bigan_cfg: bigan.BiGanConfig,
           seed: int, workers: int = 1, config_snapshot: Optional[dict] = None,
           on_generation=None) -> RunHistory:
    """Run the proposed GA with Bi-GAN supplied filter and neuron counts."""
    source = BiGanCounts(limits, bigan_cfg, seed)
    return run_generations(cfg, limits, fitness, source, seed, "proposed",
                           config_snapshot, workers, on_generation)

"""Fitness backends: trained tinynet accuracy and an analytic surrogate."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from gabigan.datasets import Dataset
from gabigan.genome import (
    CONV_FIELDS,
    DENSE_FIELDS,
    Candidate,
    ContinuousParams,
    ConvLayerGene,
    DenseLayerGene,
    Genome,
    SearchLimits,
    genome_to_indices,
    validate,
    validate_params,
)
from gabigan.tinynet import Network, TrainConfig, make_spec, spec_from_genome, train_with_early_stop


@dataclass(frozen=True)
class FitnessReport:
    accuracy: float
    epochs_run: int = 0
    wall_time: float = 0.0
    loss: Optional[float] = None
    diagnostic: Optional[str] = None

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")

    def to_dict(self, with_time: bool = True) -> dict[str, Any]:
        d = {"accuracy": self.accuracy, "epochs_run": self.epochs_run, "loss": self.loss,
             "diagnostic": self.diagnostic}
        if with_time:
            d["wall_time"] = self.wall_time
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FitnessReport":
        return cls(accuracy=d["accuracy"], epochs_run=d.get("epochs_run", 0),
                   wall_time=d.get("wall_time", 0.0), loss=d.get("loss"),
                   diagnostic=d.get("diagnostic"))


# -- trained fitness ---------------------------------------------------------

def evaluate_trained(candidate: Candidate, dataset: Dataset, cfg: TrainConfig,
                     rng: np.random.Generator, fitness_split: str = "val",
                     dense_only: bool = False) -> FitnessReport:
    """Build, train with early stopping and report the best accuracy on ``fitness_split``.

    ``dense_only`` drops every conv block and trains the dense stack alone on
    the flattened input, an ablation the genome itself cannot express.
    Never raises: a network that cannot be built or trained scores 0 and the
    reason is kept in ``diagnostic``.
    """
    start = time.perf_counter()
    try:
        spec = spec_from_genome(candidate.genome, candidate.params, dataset.input_shape,
                                dataset.n_classes)
        if dense_only:
            spec = make_spec((), spec.dense, dataset.input_shape, dataset.n_classes)
        net = Network(spec, rng, cfg.dropout_rate)
        with np.errstate(all="ignore"):
            _, acc, epochs, loss = train_with_early_stop(
                net, dataset.split("train"), dataset.split(fitness_split), cfg, rng)
        if not np.isfinite(loss):
            loss = None
        return FitnessReport(acc, epochs, time.perf_counter() - start, loss)
    except Exception as exc:  # lethal genomes must not stop the search
        return FitnessReport(0.0, 0, time.perf_counter() - start, None,
                             f"{type(exc).__name__}: {exc}")


@dataclass
class TrainedFitness:
    dataset: Dataset
    train: TrainConfig = field(default_factory=TrainConfig)
    fitness_split: str = "val"

    def __call__(self, candidate: Candidate, rng: np.random.Generator) -> FitnessReport:
        return evaluate_trained(candidate, self.dataset, self.train, rng, self.fitness_split)


# -- surrogate fitness -------------------------------------------------------

@dataclass(frozen=True)
class SurrogateSpec:
    """Known-optimum stand-in for trained accuracy.

    ``widths`` holds one scale per count slot (``C`` filter slots then ``D``
    neuron slots).
    """

    target_genome: Genome
    target_counts: ContinuousParams
    widths: tuple[float, ...]
    w_cont: float = 0.7
    w_disc: float = 0.3

    def __post_init__(self):
        if abs(self.w_cont + self.w_disc - 1.0) > 1e-12:
            raise ValueError("w_cont + w_disc must equal 1")
        if any(w <= 0 for w in self.widths):
            raise ValueError("widths must be positive")
        if len(self.widths) != len(self.target_counts.as_list()):
            raise ValueError("one width per count slot is required")

    def to_dict(self) -> dict[str, Any]:
        return {"target_genome": self.target_genome.to_dict(),
                "target_counts": self.target_counts.to_dict(),
                "widths": list(self.widths), "w_cont": self.w_cont, "w_disc": self.w_disc}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SurrogateSpec":
        return cls(Genome.from_dict(d["target_genome"]),
                   ContinuousParams.from_dict(d["target_counts"]),
                   tuple(float(w) for w in d["widths"]),
                   d.get("w_cont", 0.7), d.get("w_disc", 0.3))


def surrogate_fitness(candidate: Candidate, spec: SurrogateSpec) -> float:
    g, t = candidate.genome, spec.target_genome
    counts = candidate.params.as_list()
    target = spec.target_counts.as_list()
    C = len(g.conv)
    active = [i for i in g.active_conv()] + [C + j for j in g.active_dense()]
    sq = [((counts[i] - target[i]) / spec.widths[i]) ** 2 for i in active]
    cont = np.exp(-np.mean(sq)) if sq else 0.0
    matches = sum(getattr(a, f) == getattr(b, f)
                  for a, b in zip(g.conv, t.conv) for f in CONV_FIELDS)
    matches += sum(getattr(a, f) == getattr(b, f)
                   for a, b in zip(g.dense, t.dense) for f in DENSE_FIELDS)
    frac = matches / (len(CONV_FIELDS) * len(g.conv) + len(DENSE_FIELDS) * len(g.dense))
    return float(spec.w_cont * cont + spec.w_disc * frac)


def surrogate_scores(indices: np.ndarray, counts: np.ndarray, spec: SurrogateSpec,
                     limits: SearchLimits) -> np.ndarray:
    """Vectorised ``surrogate_fitness`` over genome index rows and count rows."""
    target_idx = genome_to_indices(spec.target_genome, limits)
    frac = (indices == target_idx).mean(axis=1)
    exists_cols = ([len(CONV_FIELDS) * j for j in range(limits.C)]
                   + [len(CONV_FIELDS) * limits.C + len(DENSE_FIELDS) * j
                      for j in range(limits.D)])
    active = indices[:, exists_cols] == 1
    z = (counts - np.asarray(spec.target_counts.as_list())) / np.asarray(spec.widths)
    n_active = active.sum(axis=1)
    mean_sq = np.where(active, z ** 2, 0.0).sum(axis=1) / np.maximum(n_active, 1)
    cont = np.where(n_active > 0, np.exp(-mean_sq), 0.0)
    return spec.w_cont * cont + spec.w_disc * frac


def default_surrogate(limits: SearchLimits, width_fraction: float = 0.1) -> SurrogateSpec:
    """A fixed target that sits off the small-set grid.

    Counts are spread over each bound's range; widths are ``width_fraction`` of
    the range.  The first two layers of each block are active.
    """
    acts = limits.activations
    conv = tuple(ConvLayerGene(exists=j < 2 or limits.C == 1,
                               kernel_size=limits.kernel_sizes[j % len(limits.kernel_sizes)],
                               activation=acts[(j + 1) % len(acts)],
                               batch_norm=j % 2 == 1, max_pool=True)
                 for j in range(limits.C))
    dense = tuple(DenseLayerGene(exists=j < 2 or limits.D == 1,
                                 activation=acts[j % len(acts)],
                                 batch_norm=False, dropout=j % 2 == 0)
                  for j in range(limits.D))

    def spread(bounds, n):
        lo, hi = bounds
        return tuple(int(round(lo + (hi - lo) * f)) for f in np.linspace(0.3, 0.7, n))

    counts = ContinuousParams(spread(limits.filter_bounds, limits.C),
                              spread(limits.neuron_bounds, limits.D))
    widths = tuple(width_fraction * (hi - lo) for lo, hi in limits.count_bounds)
    return SurrogateSpec(Genome(conv, dense), counts, widths)


@dataclass
class SurrogateFitness:
    spec: SurrogateSpec

    def __call__(self, candidate: Candidate, rng: Optional[np.random.Generator] = None
                 ) -> FitnessReport:
        start = time.perf_counter()
        score = surrogate_fitness(candidate, self.spec)
        return FitnessReport(score, 0, time.perf_counter() - start, 1.0 - score)

    def score_batch(self, indices, counts, limits):
        return surrogate_scores(indices, counts, self.spec, limits)


@dataclass(frozen=True)
class QuadraticCounts:
    """Counts-only stand-in for accuracy with a single peak at ``target``.

    Score is ``1 - mean(((x - target) / range)^2)`` floored at 0, so every slot
    pulls toward its target with a smooth gradient.
    """

    target: tuple[int, ...]
    bounds: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.target) != len(self.bounds):
            raise ValueError("target and bounds lengths differ")

    @classmethod
    def for_spec(cls, spec: SurrogateSpec, limits: SearchLimits) -> "QuadraticCounts":
        return cls(tuple(spec.target_counts.as_list()),
                   tuple(tuple(b) for b in limits.count_bounds))

    def __call__(self, params: ContinuousParams) -> float:
        x = np.asarray(params.as_list(), dtype=float)
        lo, hi = np.asarray(self.bounds, dtype=float).T
        err = (x - np.asarray(self.target, dtype=float)) / (hi - lo)
        return float(max(0.0, 1.0 - np.mean(err ** 2)))


# -- evaluation plumbing -----------------------------------------------------

def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent rng stream for one evaluation, keyed by (run seed, ...)."""
    return np.random.default_rng([int(seed), *[int(k) for k in keys]])


def _run_one(args):
    fitness, candidate, key = args
    return fitness(candidate, stream(*key))


def evaluate_all(fitness, candidates: Sequence[Candidate], keys: Sequence[tuple],
                 workers: int = 1) -> list[FitnessReport]:
    """Score candidates; results depend only on each candidate's rng key, not on order."""
    jobs = list(zip([fitness] * len(candidates), candidates, keys))
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def check_candidate(candidate: Candidate, limits: SearchLimits) -> list[str]:
    return validate(candidate.genome, limits) + validate_params(candidate.params, limits)

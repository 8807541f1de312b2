"""Discrete architecture encoding.

A genome holds ``C`` convolutional and ``D`` dense layer genes.  Every gene
keeps a legal value in every field even when the layer is switched off, so
crossover and mutation never have to special-case inactive layers.

Mutable slots are indexed ``1 .. 5*C + 4*D``: conv layers first, each
contributing ``exists, kernel_size, activation, batch_norm, max_pool``, then
dense layers with ``exists, activation, batch_norm, dropout``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, NamedTuple, Optional, Sequence

import numpy as np

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "tanh")
KERNEL_SIZES = (3, 5)
FLAGS = (False, True)

CONV_FIELDS = ("exists", "kernel_size", "activation", "batch_norm", "max_pool")
DENSE_FIELDS = ("exists", "activation", "batch_norm", "dropout")


@dataclass(frozen=True)
class ConvLayerGene:
    exists: bool = True
    kernel_size: int = 3
    activation: str = "relu"
    batch_norm: bool = False
    max_pool: bool = False


@dataclass(frozen=True)
class DenseLayerGene:
    exists: bool = True
    activation: str = "relu"
    batch_norm: bool = False
    dropout: bool = False


@dataclass(frozen=True)
class SearchLimits:
    """Size of the search space and the choice set of every field."""

    C: int = 3
    D: int = 3
    filter_bounds: tuple[int, int] = (1, 256)
    neuron_bounds: tuple[int, int] = (10, 4000)
    kernel_sizes: tuple[int, ...] = KERNEL_SIZES
    activations: tuple[str, ...] = ACTIVATIONS

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("invalid search limits: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.C < 1:
            out.append(f"C must be >= 1, got {self.C}")
        if self.D < 1:
            out.append(f"D must be >= 1, got {self.D}")
        for name in ("filter_bounds", "neuron_bounds"):
            lo, hi = getattr(self, name)
            if lo < 1:
                out.append(f"{name}: minimum must be >= 1, got {lo}")
            if lo >= hi:
                out.append(f"{name}: minimum {lo} must be below maximum {hi}")
        if not self.kernel_sizes or not self.activations:
            out.append("choice sets must be non-empty")
        return out

    def choices(self, kind: str, name: str) -> tuple:
        if name == "kernel_size":
            return self.kernel_sizes
        if name == "activation":
            return self.activations
        return FLAGS

    @property
    def count_bounds(self) -> list[tuple[int, int]]:
        """Per-slot (min, max) for the ``C + D`` continuous counts."""
        return [tuple(self.filter_bounds)] * self.C + [tuple(self.neuron_bounds)] * self.D

    def to_dict(self) -> dict[str, Any]:
        return {
            "C": self.C,
            "D": self.D,
            "filter_bounds": list(self.filter_bounds),
            "neuron_bounds": list(self.neuron_bounds),
            "kernel_sizes": list(self.kernel_sizes),
            "activations": list(self.activations),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SearchLimits":
        d = dict(d)
        for key in ("filter_bounds", "neuron_bounds", "kernel_sizes", "activations"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class Genome:
    conv: tuple[ConvLayerGene, ...]
    dense: tuple[DenseLayerGene, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "conv": [{f: getattr(g, f) for f in CONV_FIELDS} for g in self.conv],
            "dense": [{f: getattr(g, f) for f in DENSE_FIELDS} for g in self.dense],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Genome":
        return cls(
            conv=tuple(ConvLayerGene(**g) for g in d["conv"]),
            dense=tuple(DenseLayerGene(**g) for g in d["dense"]),
        )

    def active_conv(self) -> list[int]:
        return [i for i, g in enumerate(self.conv) if g.exists]

    def active_dense(self) -> list[int]:
        return [i for i, g in enumerate(self.dense) if g.exists]


@dataclass(frozen=True)
class ContinuousParams:
    """Filter count per potential conv layer, neuron count per potential dense layer."""

    filters: tuple[int, ...]
    neurons: tuple[int, ...]

    def as_list(self) -> list[int]:
        return list(self.filters) + list(self.neurons)

    @classmethod
    def from_list(cls, values: Sequence[int], C: int) -> "ContinuousParams":
        values = [int(v) for v in values]
        return cls(filters=tuple(values[:C]), neurons=tuple(values[C:]))

    def to_dict(self) -> dict[str, Any]:
        return {"filters": list(self.filters), "neurons": list(self.neurons)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ContinuousParams":
        return cls(filters=tuple(int(v) for v in d["filters"]),
                   neurons=tuple(int(v) for v in d["neurons"]))


def validate_params(params: ContinuousParams, limits: SearchLimits) -> list[str]:
    out = []
    if len(params.filters) != limits.C:
        out.append(f"filters: expected {limits.C} counts, got {len(params.filters)}")
    if len(params.neurons) != limits.D:
        out.append(f"neurons: expected {limits.D} counts, got {len(params.neurons)}")
    for name, values, (lo, hi) in (("filters", params.filters, limits.filter_bounds),
                                   ("neurons", params.neurons, limits.neuron_bounds)):
        for i, v in enumerate(values):
            if not lo <= v <= hi:
                out.append(f"{name}[{i + 1}]: {v} outside [{lo}, {hi}]")
    return out


@dataclass(frozen=True)
class Candidate:
    genome: Genome
    params: ContinuousParams
    fitness: Optional[Any] = field(default=None, compare=False)

    def with_fitness(self, report) -> "Candidate":
        return replace(self, fitness=report)

    def to_dict(self, with_time: bool = True) -> dict[str, Any]:
        return {
            "genome": self.genome.to_dict(),
            "params": self.params.to_dict(),
            "fitness": None if self.fitness is None else self.fitness.to_dict(with_time),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Candidate":
        from gabigan.evaluator import FitnessReport

        fit = d.get("fitness")
        return cls(
            genome=Genome.from_dict(d["genome"]),
            params=ContinuousParams.from_dict(d["params"]),
            fitness=None if fit is None else FitnessReport.from_dict(fit),
        )


class Slot(NamedTuple):
    kind: str  # "conv" or "dense"
    layer: int  # 1-based
    name: str


def param_slot_count(limits: SearchLimits) -> int:
    return len(CONV_FIELDS) * limits.C + len(DENSE_FIELDS) * limits.D


def locate_slot(index: int, limits: SearchLimits) -> Slot:
    """Map a 1-based mutation index onto the gene field it addresses."""
    n = param_slot_count(limits)
    if not 1 <= index <= n:
        raise IndexError(f"slot index {index} outside [1, {n}]")
    i = index - 1
    conv_span = len(CONV_FIELDS) * limits.C
    if i < conv_span:
        layer, f = divmod(i, len(CONV_FIELDS))
        return Slot("conv", layer + 1, CONV_FIELDS[f])
    layer, f = divmod(i - conv_span, len(DENSE_FIELDS))
    return Slot("dense", layer + 1, DENSE_FIELDS[f])


def get_field(genome: Genome, slot: Slot):
    layers = genome.conv if slot.kind == "conv" else genome.dense
    return getattr(layers[slot.layer - 1], slot.name)


def set_field(genome: Genome, slot: Slot, value) -> Genome:
    if slot.kind == "conv":
        conv = list(genome.conv)
        conv[slot.layer - 1] = replace(conv[slot.layer - 1], **{slot.name: value})
        return Genome(tuple(conv), genome.dense)
    dense = list(genome.dense)
    dense[slot.layer - 1] = replace(dense[slot.layer - 1], **{slot.name: value})
    return Genome(genome.conv, tuple(dense))


def repair(genome: Genome) -> Genome:
    """Force layer 1 on in any block that has no active layer."""
    conv, dense = genome.conv, genome.dense
    if conv and not any(g.exists for g in conv):
        conv = (replace(conv[0], exists=True),) + conv[1:]
    if dense and not any(g.exists for g in dense):
        dense = (replace(dense[0], exists=True),) + dense[1:]
    return Genome(conv, dense)


def _pick(rng: np.random.Generator, choices: Sequence):
    return choices[int(rng.integers(len(choices)))]


def random_genome(limits: SearchLimits, rng: np.random.Generator) -> Genome:
    conv = tuple(
        ConvLayerGene(**{f: _pick(rng, limits.choices("conv", f)) for f in CONV_FIELDS})
        for _ in range(limits.C)
    )
    dense = tuple(
        DenseLayerGene(**{f: _pick(rng, limits.choices("dense", f)) for f in DENSE_FIELDS})
        for _ in range(limits.D)
    )
    return repair(Genome(conv, dense))


def validate(genome: Genome, limits: SearchLimits) -> list[str]:
    """Return every invariant violation; an empty list means the genome is valid."""
    out = []
    if len(genome.conv) != limits.C:
        out.append(f"conv: expected {limits.C} genes, got {len(genome.conv)}")
    if len(genome.dense) != limits.D:
        out.append(f"dense: expected {limits.D} genes, got {len(genome.dense)}")
    for kind, layers, fields in (("conv", genome.conv, CONV_FIELDS),
                                 ("dense", genome.dense, DENSE_FIELDS)):
        for i, g in enumerate(layers):
            for f in fields:
                value = getattr(g, f)
                allowed = limits.choices(kind, f)
                # bool is an int subclass; keep True out of the kernel set and 1 out of the flags
                legal = any(value == c and type(value) is type(c) for c in allowed)
                if not legal:
                    out.append(f"{kind}[{i + 1}].{f}: {value!r} not in {list(allowed)}")
    if genome.conv and not any(g.exists for g in genome.conv):
        out.append("no active conv layer")
    if genome.dense and not any(g.exists for g in genome.dense):
        out.append("no active dense layer")
    return out


def genome_to_indices(genome: Genome, limits: SearchLimits) -> np.ndarray:
    """Choice index of every slot, in slot order."""
    out = []
    for i in range(1, param_slot_count(limits) + 1):
        slot = locate_slot(i, limits)
        out.append(limits.choices(slot.kind, slot.name).index(get_field(genome, slot)))
    return np.asarray(out, dtype=np.int64)


def genome_from_indices(indices: Sequence[int], limits: SearchLimits) -> Genome:
    values: dict[tuple[str, int], dict[str, Any]] = {}
    for i, idx in enumerate(indices, start=1):
        slot = locate_slot(i, limits)
        values.setdefault((slot.kind, slot.layer), {})[slot.name] = \
            limits.choices(slot.kind, slot.name)[int(idx)]
    conv = tuple(ConvLayerGene(**values[("conv", j)]) for j in range(1, limits.C + 1))
    dense = tuple(DenseLayerGene(**values[("dense", j)]) for j in range(1, limits.D + 1))
    return Genome(conv, dense)


def slot_choice_counts(limits: SearchLimits) -> np.ndarray:
    return np.asarray([
        len(limits.choices(s.kind, s.name))
        for s in (locate_slot(i, limits) for i in range(1, param_slot_count(limits) + 1))
    ], dtype=np.int64)


def random_genome_indices(limits: SearchLimits, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorised ``random_genome``: an ``(n, slots)`` index matrix with repair applied."""
    counts = slot_choice_counts(limits)
    idx = rng.integers(0, counts, size=(n, counts.size))
    # exists is a flag; index 1 is True
    conv_exists = [len(CONV_FIELDS) * j for j in range(limits.C)]
    dense_exists = [len(CONV_FIELDS) * limits.C + len(DENSE_FIELDS) * j for j in range(limits.D)]
    for cols in (conv_exists, dense_exists):
        dead = idx[:, cols].sum(axis=1) == 0
        idx[dead, cols[0]] = 1
    return idx

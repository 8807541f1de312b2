"""Run orchestration: fitness construction, method dispatch, comparisons, reports."""

from __future__ import annotations

import csv
import re
import statistics
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from gabigan.baselines import run_baseline_ga, run_random_search
from gabigan.config import METHODS, RunConfig
from gabigan.evaluator import (
    SurrogateFitness,
    TrainedFitness,
    default_surrogate,
    evaluate_trained,
    stream,
)
from gabigan.ga import evolve
from gabigan.genome import (
    CONV_FIELDS,
    DENSE_FIELDS,
    Candidate,
    ContinuousParams,
    ConvLayerGene,
    DenseLayerGene,
    Genome,
)
from gabigan.history import RunHistory
from gabigan.tinynet.network import ConvBlock, DenseBlock, Network, grad_check, make_spec

COMPARISON_COLUMNS = ("method", "seed", "best_fitness", "evals", "seconds")


def build_fitness(cfg: RunConfig):
    if cfg.fitness == "surrogate":
        return SurrogateFitness(default_surrogate(cfg.limits, cfg.surrogate_width))
    return TrainedFitness(cfg.dataset.build(), cfg.train, cfg.fitness_split)


def random_budget(cfg: RunConfig) -> int:
    if cfg.ga.budget_evals is not None:
        return cfg.ga.budget_evals
    if cfg.ga.generations is not None:
        return cfg.ga.generations * cfg.ga.n_m
    raise ValueError("random search needs budget_evals or generations")


def run_method(cfg: RunConfig, fitness=None, on_generation: Optional[Callable] = None
               ) -> RunHistory:
    """Run ``cfg.method`` once with ``cfg.seed``."""
    fitness = fitness if fitness is not None else build_fitness(cfg)
    snapshot = cfg.to_flat()
    if cfg.method == "proposed":
        return evolve(cfg.ga, cfg.limits, fitness, cfg.bigan, cfg.seed, cfg.workers,
                      snapshot, on_generation)
    if cfg.method in ("small_set", "large_set"):
        return run_baseline_ga(cfg.baseline_variant(), cfg.ga, cfg.limits, fitness, cfg.seed,
                               cfg.workers, snapshot, on_generation)
    if cfg.ga.budget_seconds is not None and cfg.ga.budget_evals is None:
        raise ValueError("random search supports evaluation budgets only")
    return run_random_search(random_budget(cfg), cfg.limits, cfg.baseline_variant("large_set"),
                             fitness, cfg.seed, cfg.random_batch, cfg.random_keep,
                             cfg.workers, snapshot, on_generation)


def compare(cfg: RunConfig, methods: Sequence[str], seeds: int,
            on_run: Optional[Callable[[dict], None]] = None) -> list[dict]:
    """Equal-budget head to head: every method runs on seeds ``cfg.seed .. cfg.seed+seeds-1``."""
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method: {', '.join(unknown)}")
    if len(methods) < 2:
        raise ValueError("compare needs at least two methods")
    fitness = build_fitness(cfg)
    rows = []
    for method in methods:
        for k in range(seeds):
            run_cfg = replace(cfg, method=method, seed=cfg.seed + k)
            h = run_method(run_cfg, fitness)
            row = {"method": method, "seed": run_cfg.seed, "best_fitness": h.best_fitness,
                   "evals": h.total_evaluations, "seconds": h.total_seconds}
            rows.append(row)
            if on_run is not None:
                on_run(row)
    return rows


def write_comparison(rows: list[dict], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "comparison.csv"
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARISON_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "best_fitness": f"{r['best_fitness']:.6f}",
                        "seconds": f"{r['seconds']:.3f}"})
    (out / "comparison.txt").write_text(median_table(rows))
    return path


def median_table(rows: list[dict]) -> str:
    """One line per method: median best fitness, median evaluations, seed count."""
    methods = list(dict.fromkeys(r["method"] for r in rows))
    lines = [f"{'method':<10} {'median_best':>11} {'median_evals':>12} {'seeds':>5}"]
    for m in methods:
        sel = [r for r in rows if r["method"] == m]
        lines.append(f"{m:<10} {statistics.median(r['best_fitness'] for r in sel):>11.4f} "
                     f"{statistics.median(r['evals'] for r in sel):>12g} {len(sel):>5}")
    return "\n".join(lines) + "\n"


DENSE_ONLY_STREAM = 6


def best_dense_only(history: RunHistory, cfg: RunConfig, top_k: int = 5) -> float:
    """Best validation accuracy of dense-only ablations of a trained-fitness run.

    The ``top_k`` best distinct dense stacks seen in ``history`` are retrained
    with every conv block removed.
    """
    dataset = cfg.dataset.build()
    seen = sorted((c for r in history.records for c in r.candidates),
                  key=lambda c: -c.fitness.accuracy)
    picked, keys = [], set()
    for c in seen:
        key = tuple((g, n) for g, n in zip(c.genome.dense, c.params.neurons) if g.exists)
        if key not in keys:
            keys.add(key)
            picked.append(c)
        if len(picked) == top_k:
            break
    scores = [evaluate_trained(c, dataset, cfg.train, stream(cfg.seed, DENSE_ONLY_STREAM, i),
                               cfg.fitness_split, dense_only=True).accuracy
              for i, c in enumerate(picked)]
    return max(scores, default=0.0)


# -- report ------------------------------------------------------------------

def _yn(v: bool) -> str:
    return "yes" if v else "no"


def format_candidate(cand: Candidate, method: str = "") -> str:
    """Per-layer listing of a candidate; ``parse_candidate`` inverts it."""
    lines = []
    if method:
        lines.append(f"method: {method}")
    if cand.fitness is not None:
        lines.append(f"fitness: {cand.fitness.accuracy:.6f}")
    lines.append(f"conv layers: {len(cand.genome.conv)}")
    for i, (g, f) in enumerate(zip(cand.genome.conv, cand.params.filters), 1):
        lines.append(f"  conv {i}: exists={_yn(g.exists)} kernel_size={g.kernel_size} "
                     f"activation={g.activation} batch_norm={_yn(g.batch_norm)} "
                     f"max_pool={_yn(g.max_pool)} filters={f}")
    lines.append(f"dense layers: {len(cand.genome.dense)}")
    for i, (g, n) in enumerate(zip(cand.genome.dense, cand.params.neurons), 1):
        lines.append(f"  dense {i}: exists={_yn(g.exists)} activation={g.activation} "
                     f"batch_norm={_yn(g.batch_norm)} dropout={_yn(g.dropout)} neurons={n}")
    return "\n".join(lines) + "\n"


_LAYER_LINE = re.compile(r"^\s*(conv|dense) (\d+): (.*)$")


def parse_candidate(text: str) -> Candidate:
    conv: dict[int, tuple] = {}
    dense: dict[int, tuple] = {}
    for line in text.splitlines():
        m = _LAYER_LINE.match(line)
        if not m:
            continue
        kv = dict(item.split("=", 1) for item in m.group(3).split())
        if m.group(1) == "conv":
            gene = ConvLayerGene(**{k: _value(k, kv[k]) for k in CONV_FIELDS})
            conv[int(m.group(2))] = (gene, int(kv["filters"]))
        else:
            gene = DenseLayerGene(**{k: _value(k, kv[k]) for k in DENSE_FIELDS})
            dense[int(m.group(2))] = (gene, int(kv["neurons"]))
    if not conv or not dense:
        raise ValueError("listing has no conv or no dense layers")
    conv_l = [conv[i] for i in sorted(conv)]
    dense_l = [dense[i] for i in sorted(dense)]
    genome = Genome(tuple(g for g, _ in conv_l), tuple(g for g, _ in dense_l))
    return Candidate(genome, ContinuousParams(tuple(c for _, c in conv_l),
                                              tuple(c for _, c in dense_l)))


def _value(key: str, raw: str):
    if key == "kernel_size":
        return int(raw)
    if key == "activation":
        return raw
    if raw not in ("yes", "no"):
        raise ValueError(f"{key}: expected yes/no, got {raw!r}")
    return raw == "yes"


# -- gradient check matrix ---------------------------------------------------

GRADCHECK_TOL = 1e-4
GRADCHECK_BN_TOL = 1e-3


def gradcheck_specs():
    """Named small network specs covering every layer type and activation."""
    out = []
    for act in ("relu", "leaky_relu", "sigmoid", "tanh"):
        out.append((f"dense {act}", [], [DenseBlock(5, act)], (1, 3, 3)))
    out += [
        ("dense dropout", [], [DenseBlock(6, "tanh", dropout=True)], (1, 3, 3)),
        ("dense batchnorm", [], [DenseBlock(6, "tanh", batch_norm=True)], (1, 3, 3)),
        ("dense x2", [], [DenseBlock(5, "sigmoid"), DenseBlock(4, "leaky_relu")], (1, 3, 3)),
        ("conv k3", [ConvBlock(2, 3, "tanh")], [DenseBlock(3, "tanh")], (1, 5, 5)),
        ("conv k5", [ConvBlock(2, 5, "sigmoid")], [DenseBlock(3, "tanh")], (1, 6, 6)),
        ("conv maxpool", [ConvBlock(2, 3, "tanh", max_pool=True)], [DenseBlock(3, "tanh")],
         (1, 6, 6)),
        ("conv batchnorm", [ConvBlock(2, 3, "tanh", batch_norm=True)], [DenseBlock(3, "tanh")],
         (1, 4, 4)),
        ("conv multichannel", [ConvBlock(3, 3, "leaky_relu")], [DenseBlock(3, "tanh")],
         (2, 4, 4)),
        ("conv x2 pool", [ConvBlock(2, 3, "tanh", max_pool=True), ConvBlock(2, 3, "sigmoid")],
         [DenseBlock(3, "tanh")], (1, 6, 6)),
        ("conv all flags", [ConvBlock(2, 3, "tanh", batch_norm=True, max_pool=True)],
         [DenseBlock(4, "sigmoid", batch_norm=True, dropout=True)], (1, 6, 6)),
    ]
    return out


def gradcheck_matrix(seed: int = 0, corrupt: bool = False) -> list[dict]:
    """Finite-difference check of every spec; ``corrupt`` perturbs the analytic gradients."""
    hook = None
    if corrupt:
        def hook(grads):
            return [g * 1.01 + 1e-3 for g in grads]
    rows = []
    for i, (name, conv, dense, shape) in enumerate(gradcheck_specs()):
        spec = make_spec(conv, dense, shape, 3)
        net = Network(spec, np.random.default_rng([seed, i]))
        err = grad_check(net, seed=seed + i, gradient_hook=hook)
        has_bn = any(b.batch_norm for b in (*conv, *dense))
        tol = GRADCHECK_BN_TOL if has_bn else GRADCHECK_TOL
        rows.append({"name": name, "error": err, "tolerance": tol, "ok": err < tol})
    return rows

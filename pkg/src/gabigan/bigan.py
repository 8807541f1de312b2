"""Two generators and one discriminator proposing filter/neuron counts.

Both generators map Gaussian noise to a vector in (-1, 1)^(C+D), which is
rescaled to integer counts.  Each iteration scores ``m`` proposals from each
generator, labels the one with the higher mean accuracy as the better
generator ``a``, trains the discriminator to tell ``a``'s outputs from
``b``'s and moves ``b`` along the discriminator's gradient towards ``a``.
``a`` itself is never trained; if the two generators produce identical
counts on a fixed probe batch for two iterations in a row, ``b`` is redrawn.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from gabigan.genome import ContinuousParams, SearchLimits

LEAKY_SLOPE = 0.01
CHECKPOINT_VERSION = 1

Mlp = list  # [W1, b1, W2, b2, ...]


@dataclass(frozen=True)
class BiGanConfig:
    noise_dim: int = 16
    gen_hidden: tuple[int, ...] = (64, 64)
    disc_hidden: tuple[int, ...] = (64, 32)
    m: int = 100
    gen_lr: float = 1e-3
    disc_lr: float = 1e-3
    probe_size: int = 16
    # scale on the uniform init of the generator output layer
    out_init_scale: float = 1.0
    # counts closer than this fraction of a slot's range count as equal
    equal_tolerance: float = 0.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.noise_dim < 1 or self.probe_size < 1:
            raise ValueError("noise_dim and probe_size must be positive")
        if self.gen_lr <= 0 or self.disc_lr <= 0:
            raise ValueError("learning rates must be positive")

    def to_dict(self):
        d = asdict(self)
        d["gen_hidden"] = list(self.gen_hidden)
        d["disc_hidden"] = list(self.disc_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("gen_hidden", "disc_hidden"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def init_mlp(sizes: Sequence[int], rng: np.random.Generator) -> Mlp:
    out = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / n_in)
        out += [rng.uniform(-limit, limit, size=(n_in, n_out)), np.zeros(n_out)]
    return out


def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def mlp_forward(weights: Mlp, x: np.ndarray):
    """Leaky-relu hidden layers, linear last layer. Returns (output, cache)."""
    acts = [x]
    pre = []
    n_layers = len(weights) // 2
    for i in range(n_layers):
        z = acts[-1] @ weights[2 * i] + weights[2 * i + 1]
        pre.append(z)
        acts.append(_leaky(z) if i < n_layers - 1 else z)
    return acts[-1], (acts, pre)


def mlp_backward(weights: Mlp, cache, dout: np.ndarray):
    """Gradients of every weight and of the input, given d(loss)/d(output)."""
    acts, pre = cache
    grads = [None] * len(weights)
    d = dout
    for i in reversed(range(len(weights) // 2)):
        if i < len(weights) // 2 - 1:
            d = np.where(pre[i] > 0, d, LEAKY_SLOPE * d)
        grads[2 * i] = acts[i].T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        d = d @ weights[2 * i].T
    return grads, d


def generator_forward(G: Mlp, z: np.ndarray) -> np.ndarray:
    """Raw proposal(s) in (-1, 1); ``z`` may be one noise vector or a batch."""
    out, _ = mlp_forward(G, np.atleast_2d(z))
    out = np.tanh(out)
    return out[0] if np.ndim(z) == 1 else out


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def discriminator_forward(D: Mlp, g_raw: np.ndarray):
    """Probability that the input came from the better generator."""
    s, _ = mlp_forward(D, np.atleast_2d(g_raw))
    p = _sigmoid(s[:, 0])
    return float(p[0]) if np.ndim(g_raw) == 1 else p


def rescale(raw: np.ndarray, bounds: Sequence[tuple[int, int]]) -> np.ndarray:
    """Map (-1, 1) onto integer counts in [lo, hi]; works on one vector or a batch."""
    lo = np.asarray([b[0] for b in bounds], dtype=float)
    hi = np.asarray([b[1] for b in bounds], dtype=float)
    raw = np.asarray(raw, dtype=float)
    # floor(x + 0.5) so that ties round the same way everywhere
    vals = np.floor(raw * (hi - lo) / 2.0 + (hi + lo) / 2.0 + 0.5)
    return np.clip(vals, lo, hi).astype(np.int64)


def to_params(counts: np.ndarray, C: int) -> ContinuousParams:
    return ContinuousParams.from_list(counts.tolist(), C)


@dataclass
class BiGanState:
    G1: Mlp
    G2: Mlp
    D: Mlp
    probe_noise: np.ndarray
    bounds: list[tuple[int, int]]
    C: int
    better: int = 1
    equal_streak: int = 0
    iteration: int = 0

    @property
    def G_a(self) -> Mlp:
        return self.G1 if self.better == 1 else self.G2

    @property
    def G_b(self) -> Mlp:
        return self.G2 if self.better == 1 else self.G1

    def with_generator(self, label: int, weights: Mlp) -> "BiGanState":
        return replace(self, **{f"G{label}": weights})

    # -- checkpointing -------------------------------------------------------

    def to_dict(self) -> dict:
        def enc(arrays):
            return [{"shape": list(a.shape),
                     "data": base64.b64encode(np.ascontiguousarray(a, "<f8").tobytes()).decode()}
                    for a in arrays]

        return {"version": CHECKPOINT_VERSION, "G1": enc(self.G1), "G2": enc(self.G2),
                "D": enc(self.D), "probe_noise": enc([self.probe_noise])[0],
                "bounds": [list(b) for b in self.bounds], "C": self.C,
                "better": self.better, "equal_streak": self.equal_streak,
                "iteration": self.iteration}

    @classmethod
    def from_dict(cls, d: dict) -> "BiGanState":
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")

        def dec(item):
            return np.frombuffer(base64.b64decode(item["data"]), dtype="<f8").reshape(
                item["shape"]).copy()

        return cls(G1=[dec(a) for a in d["G1"]], G2=[dec(a) for a in d["G2"]],
                   D=[dec(a) for a in d["D"]], probe_noise=dec(d["probe_noise"]),
                   bounds=[tuple(b) for b in d["bounds"]], C=d["C"], better=d["better"],
                   equal_streak=d["equal_streak"], iteration=d["iteration"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "BiGanState":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_generator(limits_or_dim, cfg: BiGanConfig, rng: np.random.Generator) -> Mlp:
    out_dim = limits_or_dim if isinstance(limits_or_dim, int) else \
        limits_or_dim.C + limits_or_dim.D
    G = init_mlp([cfg.noise_dim, *cfg.gen_hidden, out_dim], rng)
    G[-2] *= cfg.out_init_scale
    return G


def init_state(limits: SearchLimits, cfg: BiGanConfig, rng: np.random.Generator) -> BiGanState:
    out_dim = limits.C + limits.D
    G1 = init_generator(out_dim, cfg, rng)
    G2 = init_generator(out_dim, cfg, rng)
    D = init_mlp([out_dim, *cfg.disc_hidden, 1], rng)
    probe = rng.standard_normal((cfg.probe_size, cfg.noise_dim))
    return BiGanState(G1, G2, D, probe, limits.count_bounds, limits.C)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    acc1: float
    acc2: float
    better: int
    disc_objective: float  # mean log D(G_a) + log(1 - D(G_b)), before the update
    gen_objective: float  # mean log(1 - D(G_b)), before the generator step
    evaluations: int
    equal_streak: int
    reinitialized: bool

    def to_dict(self):
        return asdict(self)


def _disc_objective(D, xa, xb):
    pa = discriminator_forward(D, xa)
    pb = discriminator_forward(D, xb)
    return float(np.mean(np.log(pa) + np.log1p(-pb)))


def discriminator_step(D: Mlp, xa: np.ndarray, xb: np.ndarray, lr: float) -> Mlp:
    """One ascent step on mean[log D(xa) + log(1 - D(xb))]."""
    m = len(xa)
    x = np.vstack([xa, xb])
    s, cache = mlp_forward(D, x)
    p = _sigmoid(s[:, 0])
    # d/ds log sigmoid(s) = 1 - p ; d/ds log(1 - sigmoid(s)) = -p
    ds = np.concatenate([1.0 - p[:m], -p[m:]]) / m
    grads, _ = mlp_backward(D, cache, ds[:, None])
    return [w + lr * g for w, g in zip(D, grads)]


def generator_objective(G: Mlp, D: Mlp, z: np.ndarray) -> float:
    return float(np.mean(np.log1p(-discriminator_forward(D, generator_forward(G, z)))))


def generator_step(G: Mlp, D: Mlp, z: np.ndarray, lr: float) -> Mlp:
    """One descent step on mean log(1 - D(G(z)))."""
    m = len(z)
    h, g_cache = mlp_forward(G, z)
    x = np.tanh(h)
    s, d_cache = mlp_forward(D, x)
    p = _sigmoid(s[:, 0])
    ds = (-p / m)[:, None]
    _, dx = mlp_backward(D, d_cache, ds)
    dh = dx * (1.0 - x ** 2)
    grads, _ = mlp_backward(G, g_cache, dh)
    return [w - lr * g for w, g in zip(G, grads)]


def probe_counts(G: Mlp, state: BiGanState) -> np.ndarray:
    return rescale(generator_forward(G, state.probe_noise), state.bounds)


def reinit_if_stuck(state: BiGanState, cfg: BiGanConfig, rng: np.random.Generator
                    ) -> tuple[BiGanState, bool]:
    """Count iterations in which both generators give identical counts on the
    probe batch; on the second in a row, redraw ``G_b``."""
    diff = np.abs(probe_counts(state.G1, state) - probe_counts(state.G2, state))
    span = np.asarray([hi - lo for lo, hi in state.bounds])
    same = bool(np.all(diff <= cfg.equal_tolerance * span))
    if not same:
        return replace(state, equal_streak=0), False
    streak = state.equal_streak + 1
    if streak < 2:
        return replace(state, equal_streak=streak), False
    b = 2 if state.better == 1 else 1
    fresh = init_generator(len(state.bounds), cfg, rng)
    return replace(state.with_generator(b, fresh), equal_streak=0), True


def _mean_accuracy(values) -> float:
    vals = [float(v) if v is not None and np.isfinite(v) else 0.0 for v in values]
    return float(np.mean(vals))


def bigan_iteration(state: BiGanState, fitness_of: Optional[Callable[[ContinuousParams], float]],
                    cfg: BiGanConfig, rng: np.random.Generator,
                    fitness_many: Optional[Callable[[list, list], list]] = None,
                    ) -> tuple[BiGanState, IterationRecord]:
    """One round: score both generators, relabel, train D, then train ``G_b``.

    ``fitness_many(params_1, params_2)`` may replace ``fitness_of`` to score
    both proposal lists in one (possibly concurrent) call.
    """
    z1 = rng.standard_normal((cfg.m, cfg.noise_dim))
    z2 = rng.standard_normal((cfg.m, cfg.noise_dim))
    raw1 = generator_forward(state.G1, z1)
    raw2 = generator_forward(state.G2, z2)
    p1 = [to_params(c, state.C) for c in rescale(raw1, state.bounds)]
    p2 = [to_params(c, state.C) for c in rescale(raw2, state.bounds)]
    if fitness_many is not None:
        accs1, accs2 = fitness_many(p1, p2)
    else:
        accs1, accs2 = [_safe(fitness_of, p) for p in p1], [_safe(fitness_of, p) for p in p2]
    acc1, acc2 = _mean_accuracy(accs1), _mean_accuracy(accs2)
    better = state.better
    if acc1 > acc2:
        better = 1
    elif acc2 > acc1:
        better = 2
    state = replace(state, better=better)
    b = 2 if better == 1 else 1
    xa, xb = (raw1, raw2) if better == 1 else (raw2, raw1)
    zb = z2 if better == 1 else z1

    disc_obj = _disc_objective(state.D, xa, xb)
    D = discriminator_step(state.D, xa, xb, cfg.disc_lr)
    state = replace(state, D=D)
    gen_obj = generator_objective(state.G_b, D, zb)
    state = state.with_generator(b, generator_step(state.G_b, D, zb, cfg.gen_lr))
    state, fired = reinit_if_stuck(state, cfg, rng)
    state = replace(state, iteration=state.iteration + 1)
    return state, IterationRecord(state.iteration, acc1, acc2, better, disc_obj, gen_obj,
                                  2 * cfg.m, state.equal_streak, fired)


def _safe(fitness_of, params) -> float:
    try:
        return float(fitness_of(params))
    except Exception:
        return 0.0


def propose_params(state: BiGanState, rng: np.random.Generator, noise_dim: Optional[int] = None
                   ) -> ContinuousParams:
    """Counts from the current better generator on fresh noise."""
    dim = noise_dim if noise_dim is not None else state.G_a[0].shape[0]
    raw = generator_forward(state.G_a, rng.standard_normal(dim))
    return to_params(rescale(raw, state.bounds), state.C)


def mean_probe_counts(state: BiGanState) -> np.ndarray:
    """Mean rescaled output of the better generator over the probe batch."""
    return probe_counts(state.G_a, state).mean(axis=0)

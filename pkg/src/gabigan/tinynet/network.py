"""Assembling a trainable network from a genome and its counts."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from gabigan.genome import ContinuousParams, Genome
from gabigan.tinynet.layers import (
    Activation,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2,
    softmax,
)


class BuildError(ValueError):
    """The requested architecture cannot be realised for this input."""


@dataclass(frozen=True)
class ConvBlock:
    filters: int
    kernel: int
    activation: str = "relu"
    batch_norm: bool = False
    max_pool: bool = False


@dataclass(frozen=True)
class DenseBlock:
    neurons: int
    activation: str = "relu"
    batch_norm: bool = False
    dropout: bool = False


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]
    n_classes: int
    conv: tuple[ConvBlock, ...]
    dense: tuple[DenseBlock, ...]
    # indices into ``conv`` whose max-pool was dropped to keep spatial dims >= 1
    skipped_pools: tuple[int, ...] = ()

    def describe(self) -> list[str]:
        out = []
        for i, b in enumerate(self.conv):
            extra = "".join([
                "+bn" if b.batch_norm else "",
                "+pool" if b.max_pool and i not in self.skipped_pools else "",
            ])
            out.append(f"conv {b.filters}@{b.kernel}{extra}")
        out.append("flatten")
        for b in self.dense:
            extra = ("+bn" if b.batch_norm else "") + ("+dropout" if b.dropout else "")
            out.append(f"dense {b.neurons}{extra}")
        out.append(f"dense {self.n_classes}+softmax")
        return out


def normalize_shape(input_shape) -> tuple[int, int, int]:
    if isinstance(input_shape, (int, np.integer)):
        return (1, int(input_shape), int(input_shape))
    shape = tuple(int(s) for s in input_shape)
    if len(shape) == 2:
        return (1,) + shape
    if len(shape) == 3:
        return shape
    raise ValueError(f"input shape must be side, (H, W) or (C, H, W); got {input_shape!r}")


def spec_from_genome(genome: Genome, params: ContinuousParams, input_shape,
                     n_classes: int) -> NetworkSpec:
    conv = tuple(
        ConvBlock(params.filters[i], g.kernel_size, g.activation, g.batch_norm, g.max_pool)
        for i, g in enumerate(genome.conv) if g.exists
    )
    dense = tuple(
        DenseBlock(params.neurons[i], g.activation, g.batch_norm, g.dropout)
        for i, g in enumerate(genome.dense) if g.exists
    )
    return make_spec(conv, dense, input_shape, n_classes)


def make_spec(conv: Sequence[ConvBlock], dense: Sequence[DenseBlock], input_shape,
              n_classes: int) -> NetworkSpec:
    """Check dimensions block by block and record pools that had to be skipped."""
    c, h, w = normalize_shape(input_shape)
    skipped = []
    for i, b in enumerate(conv):
        if h < b.kernel or w < b.kernel:
            raise BuildError(
                f"conv layer {i + 1}: {h}x{w} input is smaller than kernel {b.kernel}")
        if b.max_pool:
            if h // 2 < 1 or w // 2 < 1:
                skipped.append(i)
            else:
                h, w = h // 2, w // 2
    if n_classes < 2:
        raise BuildError("need at least two classes")
    return NetworkSpec(normalize_shape(input_shape), n_classes, tuple(conv), tuple(dense),
                       tuple(skipped))


class Network:
    """Layer stack ending in a softmax over ``n_classes`` outputs."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator, dropout_rate: float = 0.5):
        self.spec = spec
        layers: list[Layer] = []
        c, h, w = spec.input_shape
        for i, b in enumerate(spec.conv):
            layers.append(Conv2D(c, b.filters, b.kernel, rng))
            c = b.filters
            if b.batch_norm:
                layers.append(BatchNorm(c, spatial=True))
            layers.append(Activation(b.activation))
            if b.max_pool and i not in spec.skipped_pools:
                layers.append(MaxPool2())
                h, w = h // 2, w // 2
        layers.append(Flatten())
        n = c * h * w
        for b in spec.dense:
            layers.append(Dense(n, b.neurons, rng))
            n = b.neurons
            if b.batch_norm:
                layers.append(BatchNorm(n, spatial=False))
            layers.append(Activation(b.activation))
            if b.dropout:
                layers.append(Dropout(dropout_rate))
        layers.append(Dense(n, spec.n_classes, rng))
        self.layers = layers

    def parameters(self) -> list[tuple[Layer, str]]:
        return [(layer, name) for layer in self.layers for name in layer.params]

    def weights(self) -> list[np.ndarray]:
        return [layer.params[name] for layer, name in self.parameters()]

    def n_weights(self) -> int:
        return sum(w.size for w in self.weights())

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def logits(self, x: np.ndarray, training: bool, rng=None) -> np.ndarray:
        if x.shape[1:] != self.spec.input_shape:
            raise ValueError(
                f"batch shape {x.shape[1:]} does not match input shape {self.spec.input_shape}")
        for layer in self.layers:
            x = layer.forward(x, training, rng)
        return x

    def forward(self, x: np.ndarray, training: bool = False, rng=None) -> np.ndarray:
        """Class probabilities, shape ``(batch, n_classes)``."""
        return softmax(self.logits(x, training, rng))

    def loss_and_gradients(self, x: np.ndarray, labels: np.ndarray, rng=None,
                           training: bool = True) -> tuple[float, list[np.ndarray]]:
        """Mean cross-entropy of the true class and its gradient for every weight."""
        labels = np.asarray(labels)
        k = self.spec.n_classes
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"labels must lie in [0, {k})")
        logits = self.logits(x, training, rng)
        z = logits - logits.max(axis=1, keepdims=True)
        log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        n = x.shape[0]
        loss = float(-log_p[np.arange(n), labels].mean())
        d = np.exp(log_p)
        d[np.arange(n), labels] -= 1.0
        d /= n
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return loss, [layer.grads[name] for layer, name in self.parameters()]

    def sgd_step(self, grads: list[np.ndarray], lr: float) -> None:
        for w, g in zip(self.weights(), grads):
            w -= lr * g


def build_network(genome: Genome, params: ContinuousParams, input_shape, n_classes: int,
                  rng: np.random.Generator, dropout_rate: float = 0.5) -> Network:
    return Network(spec_from_genome(genome, params, input_shape, n_classes), rng, dropout_rate)


def _freeze_stats(net: Network, frozen: bool) -> None:
    for layer in net.layers:
        if isinstance(layer, BatchNorm):
            layer.update_stats = not frozen


def grad_check(net: Network, eps: float = 1e-4, batch: Optional[np.ndarray] = None,
               labels: Optional[np.ndarray] = None, seed: int = 0,
               training: bool = True, gradient_hook=None) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Every weight is perturbed.  Dropout masks are held fixed by reseeding the
    rng for each evaluation; batch-norm running statistics are not touched.
    ``gradient_hook`` may rewrite the analytic gradients before comparison
    (used as a negative control).
    """
    rng = np.random.default_rng(seed)
    if batch is None:
        batch = rng.normal(size=(4,) + net.spec.input_shape)
    if labels is None:
        labels = rng.integers(0, net.spec.n_classes, size=batch.shape[0])
    _freeze_stats(net, True)
    try:
        _, grads = net.loss_and_gradients(batch, labels, np.random.default_rng(seed + 1),
                                          training)
        grads = [g.copy() for g in grads]
        if gradient_hook is not None:
            grads = gradient_hook(grads)
        worst = 0.0
        for w, g in zip(net.weights(), grads):
            flat = w.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp, _ = net.loss_and_gradients(batch, labels, np.random.default_rng(seed + 1),
                                               training)
                flat[i] = orig - eps
                lm, _ = net.loss_and_gradients(batch, labels, np.random.default_rng(seed + 1),
                                               training)
                flat[i] = orig
                num = (lp - lm) / (2 * eps)
                denom = max(abs(num), abs(gflat[i]), 1e-8)
                worst = max(worst, abs(num - gflat[i]) / denom)
        return worst
    finally:
        _freeze_stats(net, False)

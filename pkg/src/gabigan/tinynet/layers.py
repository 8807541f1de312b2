"""Layer primitives with explicit forward/backward passes.

Images are NCHW float arrays.  Every layer caches what its backward pass
needs during ``forward``; ``backward`` takes the upstream gradient and
returns the gradient with respect to the layer input, filling ``grads``
for trainable parameters.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LEAKY_SLOPE = 0.01


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    trainable = False

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x, training, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Dense(Layer):
    trainable = True

    def __init__(self, n_in, n_out, rng):
        super().__init__()
        self.params = {"W": he_uniform(rng, (n_in, n_out), n_in), "b": np.zeros(n_out)}

    def forward(self, x, training, rng=None):
        self.x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self.x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


def _correlate_same(x, w):
    """Stride-1 'same' cross-correlation: x (N,C,H,W), w (O,C,k,k) -> (N,O,H,W)."""
    k = w.shape[-1]
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))  # N,C,H,W,k,k
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # N,H,W,O
    return out.transpose(0, 3, 1, 2), cols


class Conv2D(Layer):
    """2D convolution, stride 1, zero 'same' padding (odd kernels only)."""

    trainable = True

    def __init__(self, c_in, c_out, kernel, rng):
        super().__init__()
        if kernel % 2 != 1:
            raise ValueError("same padding needs an odd kernel size")
        fan_in = c_in * kernel * kernel
        self.params = {"W": he_uniform(rng, (c_out, c_in, kernel, kernel), fan_in),
                       "b": np.zeros(c_out)}

    def forward(self, x, training, rng=None):
        out, self.cols = _correlate_same(x, self.params["W"])
        return out + self.params["b"][None, :, None, None]

    def backward(self, dout):
        w = self.params["W"]
        self.grads["W"] = np.tensordot(dout, self.cols, axes=([0, 2, 3], [0, 2, 3]))
        self.grads["b"] = dout.sum(axis=(0, 2, 3))
        # transpose of a same-padded correlation is a same-padded correlation
        # with the kernel flipped and the channel axes swapped
        w_t = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        dx, _ = _correlate_same(dout, np.ascontiguousarray(w_t))
        return dx


class MaxPool2(Layer):
    """2x2 max-pool with stride 2; odd trailing rows/columns are dropped."""

    def forward(self, x, training, rng=None):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        self.in_shape = x.shape
        blocks = x[:, :, : 2 * h2, : 2 * w2].reshape(n, c, h2, 2, w2, 2)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        self.arg = blocks.argmax(axis=-1)
        return np.take_along_axis(blocks, self.arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        n, c, h, w = self.in_shape
        h2, w2 = h // 2, w // 2
        onehot = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
        np.put_along_axis(onehot, self.arg[..., None], dout[..., None], axis=-1)
        blocks = onehot.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        dx = np.zeros(self.in_shape, dtype=dout.dtype)
        dx[:, :, : 2 * h2, : 2 * w2] = blocks.reshape(n, c, 2 * h2, 2 * w2)
        return dx


class BatchNorm(Layer):
    """Batch normalisation over the batch (and spatial) axes."""

    trainable = True

    def __init__(self, channels, spatial, momentum=0.9, eps=1e-5):
        super().__init__()
        self.params = {"gamma": np.ones(channels), "beta": np.zeros(channels)}
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self.axes = (0, 2, 3) if spatial else (0,)
        self.spatial = spatial

    def _bcast(self, v):
        return v[None, :, None, None] if self.spatial else v[None, :]

    def forward(self, x, training, rng=None):
        if training:
            mean = x.mean(axis=self.axes)
            var = x.var(axis=self.axes)
            if getattr(self, "update_stats", True):
                self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
                self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        self.inv_std = 1.0 / np.sqrt(var + self.eps)
        self.x_hat = (x - self._bcast(mean)) * self._bcast(self.inv_std)
        self.training = training
        return self.x_hat * self._bcast(self.params["gamma"]) + self._bcast(self.params["beta"])

    def backward(self, dout):
        self.grads["gamma"] = (dout * self.x_hat).sum(axis=self.axes)
        self.grads["beta"] = dout.sum(axis=self.axes)
        dx_hat = dout * self._bcast(self.params["gamma"])
        inv_std = self._bcast(self.inv_std)
        if not self.training:
            return dx_hat * inv_std
        m = dout.size / dout.shape[1]
        s1 = self._bcast(dx_hat.sum(axis=self.axes))
        s2 = self._bcast((dx_hat * self.x_hat).sum(axis=self.axes))
        return inv_std * (dx_hat - s1 / m - self.x_hat * s2 / m)


class Activation(Layer):
    def __init__(self, name):
        super().__init__()
        if name not in ("relu", "leaky_relu", "sigmoid", "tanh"):
            raise ValueError(f"unknown activation {name!r}")
        self.name = name

    def forward(self, x, training, rng=None):
        if self.name == "relu":
            self.mask = x > 0
            return np.where(self.mask, x, 0.0)
        if self.name == "leaky_relu":
            self.mask = x > 0
            return np.where(self.mask, x, LEAKY_SLOPE * x)
        if self.name == "sigmoid":
            self.out = 0.5 * (1.0 + np.tanh(0.5 * x))
            return self.out
        self.out = np.tanh(x)
        return self.out

    def backward(self, dout):
        if self.name == "relu":
            return np.where(self.mask, dout, 0.0)
        if self.name == "leaky_relu":
            return np.where(self.mask, dout, LEAKY_SLOPE * dout)
        if self.name == "sigmoid":
            return dout * self.out * (1.0 - self.out)
        return dout * (1.0 - self.out ** 2)


class Dropout(Layer):
    """Inverted dropout; identity at inference time."""

    def __init__(self, rate):
        super().__init__()
        if not 0.0 < rate < 1.0:
            raise ValueError("dropout rate must lie in (0, 1)")
        self.rate = rate

    def forward(self, x, training, rng=None):
        if not training:
            self.mask = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        self.mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self.mask

    def backward(self, dout):
        return dout if self.mask is None else dout * self.mask


class Flatten(Layer):
    def forward(self, x, training, rng=None):
        self.in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self.in_shape)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)

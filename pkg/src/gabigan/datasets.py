"""Synthetic classification data and MNIST-style IDX ingestion."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from gabigan.tinynet.network import normalize_shape

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class BadMagicError(IdxError):
    pass


class TruncatedFileError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: Optional[np.ndarray]
    y_test: Optional[np.ndarray]
    n_classes: int
    source: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.x_train) < 1 or len(self.x_val) < 1:
            raise ValueError("train and validation splits need at least one sample")
        for x, y in ((self.x_train, self.y_train), (self.x_val, self.y_val)):
            if len(x) != len(y):
                raise ValueError("inputs and labels differ in length")
            if y.min() < 0 or y.max() >= self.n_classes:
                raise ValueError("labels out of range")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.x_train.shape[1:])

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return getattr(self, f"x_{name}"), getattr(self, f"y_{name}")


def _stratified_order(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Interleave shuffled class members so every contiguous block is balanced."""
    per_class = [rng.permutation(np.flatnonzero(labels == k)) for k in np.unique(labels)]
    order = []
    for i in range(max(len(p) for p in per_class)):
        order.extend(int(p[i]) for p in per_class if i < len(p))
    return np.asarray(order)


def _blobs(n, shape, rng):
    dim = int(np.prod(shape))
    u = rng.normal(size=dim)
    u /= np.linalg.norm(u)
    y = np.arange(n) % 2
    x = rng.normal(scale=0.5, size=(n, dim))
    x -= np.outer(x @ u, u)
    # projection on u has margin 2 on either side of the origin
    proj = (2 * y - 1) * (2.0 + 0.5 * np.abs(rng.normal(size=n)))
    x += np.outer(proj, u)
    return x.reshape((n,) + shape), y


def _grid(h, w):
    return np.mgrid[0:h, 0:w].astype(float)


def _rings(n, shape, rng):
    # hollow rings vs filled discs of matching pixel mass at random positions
    c, h, w = shape
    if min(h, w) < 8:
        raise ValueError("rings need images of at least 8x8")
    yy, xx = _grid(h, w)
    y = np.arange(n) % 2
    x = np.zeros((n, c, h, w))
    for i in range(n):
        radius = rng.uniform(2.0, 3.0)
        cy = rng.uniform(radius + 0.5, h - 1.5 - radius)
        cx = rng.uniform(radius + 0.5, w - 1.5 - radius)
        d = np.hypot(yy - cy, xx - cx)
        if y[i] == 0:
            img = (np.abs(d - radius) < 0.5).astype(float)
        else:
            img = (d < np.sqrt(2.0 * radius)).astype(float)
        x[i] = img
    x += rng.normal(scale=0.2, size=x.shape)
    return x, y


def _bars(n, shape, rng):
    # horizontal vs vertical bars; every pixel is equally likely to be lit in both classes
    c, h, w = shape
    if min(h, w) < 4:
        raise ValueError("bars need images of at least 4x4")
    y = np.arange(n) % 2
    x = np.zeros((n, c, h, w))
    for i in range(n):
        length = int(rng.integers(3, min(h, w) // 2 + 2))
        if y[i] == 0:
            r, c0 = int(rng.integers(h)), int(rng.integers(w - length + 1))
            x[i, :, r, c0:c0 + length] = 1.0
        else:
            r0, col = int(rng.integers(h - length + 1)), int(rng.integers(w))
            x[i, :, r0:r0 + length, col] = 1.0
    x += rng.normal(scale=0.2, size=x.shape)
    return x, y


_MAKERS = {"blobs": _blobs, "rings": _rings, "bars": _bars}


def make_synthetic_dataset(kind: str, n_samples: int, input_shape, seed: int,
                           val_fraction: float = 0.25, test_fraction: float = 0.25) -> Dataset:
    """Two-class dataset, deterministic in ``seed``.

    ``blobs`` are linearly separable Gaussian clouds in the flattened input;
    ``rings`` and ``bars`` are images whose classes differ only in local
    shape, so convolutional features help.
    """
    if kind not in _MAKERS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {sorted(_MAKERS)}")
    if n_samples < 10:
        raise ValueError("n_samples must be at least 10")
    shape = normalize_shape(input_shape)
    if min(shape) < 1:
        raise ValueError(f"invalid input shape {input_shape!r}")
    rng = np.random.default_rng(seed)
    x, y = _MAKERS[kind](n_samples, shape, rng)
    order = _stratified_order(y, rng)
    n_val = max(1, int(round(val_fraction * n_samples)))
    n_test = max(1, int(round(test_fraction * n_samples)))
    n_train = n_samples - n_val - n_test
    if n_train < 1:
        raise ValueError("fractions leave no training samples")
    tr, va, te = order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]
    return Dataset(x[tr], y[tr], x[va], y[va], x[te], y[te], n_classes=2,
                   source={"kind": kind, "n_samples": n_samples, "input_shape": list(shape),
                           "seed": seed})


def _read_idx(path, magic: int, n_dims: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = 4 + 4 * n_dims
    if len(raw) < 4:
        raise TruncatedFileError(f"truncated file: {path} has no header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"bad magic in {path}: 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise TruncatedFileError(f"truncated file: {path} header is incomplete")
    dims = struct.unpack(">" + "I" * n_dims, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise TruncatedFileError(
            f"truncated file: {path} holds {len(raw) - header} bytes of data, expected {size}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path, limit: Optional[int] = None,
             val_fraction: float = 0.2) -> Dataset:
    """Load an IDX image/label pair; the first part is training, the tail validation."""
    images = _read_idx(images_path, IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise CountMismatchError(
            f"count mismatch: {len(images)} images but {len(labels)} labels")
    n = len(images) if limit is None else min(limit, len(images))
    x = images[:n].astype(np.float64)[:, None, :, :] / 255.0
    y = labels[:n].astype(np.int64)
    n_val = int(round(val_fraction * n))
    if n_val < 1 or n_val >= n:
        raise ValueError("val_fraction leaves an empty split")
    cut = n - n_val
    return Dataset(x[:cut], y[:cut], x[cut:], y[cut:], None, None,
                   n_classes=max(2, int(y.max()) + 1),
                   source={"kind": "idx", "images": str(images_path),
                           "labels": str(labels_path), "limit": limit})


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(
        struct.pack(">IIII", IMAGES_MAGIC, *images.shape) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", LABELS_MAGIC, len(labels)) + labels.tobytes())

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from gabigan.tinynet.network import Network


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    dropout_rate: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be positive")
        if not 0.0 < self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


def predict(net: Network, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    return np.concatenate([net.forward(x[i:i + batch_size], training=False)
                           for i in range(0, len(x), batch_size)])


def accuracy_and_loss(net: Network, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    p = predict(net, x)
    acc = float((p.argmax(axis=1) == y).mean())
    loss = float(-np.log(np.clip(p[np.arange(len(y)), y], 1e-12, None)).mean())
    return acc, loss


def train_with_early_stop(net: Network, train: tuple[np.ndarray, np.ndarray],
                          val: tuple[np.ndarray, np.ndarray], cfg: TrainConfig,
                          rng: np.random.Generator):
    """Plain minibatch SGD, stopped after ``cfg.patience`` epochs without a strictly
    better validation accuracy.

    Returns ``(net, best_val_accuracy, epochs_run, best_val_loss)``; ``net`` holds the
    weights of the best epoch.
    """
    x_tr, y_tr = train
    x_val, y_val = val
    if len(x_tr) == 0 or len(x_val) == 0:
        raise ValueError("training and validation splits must be non-empty")
    acc, loss = accuracy_and_loss(net, x_val, y_val)
    if cfg.max_epochs == 0:
        return net, acc, 0, loss

    best_acc, best_loss, best_net = -1.0, loss, net
    stale = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(x_tr))
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            _, grads = net.loss_and_gradients(x_tr[idx], y_tr[idx], rng)
            net.sgd_step(grads, cfg.learning_rate)
        acc, loss = accuracy_and_loss(net, x_val, y_val)
        if acc > best_acc:
            best_acc, best_loss, best_net = acc, loss, net.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best_net, best_acc, epoch, best_loss

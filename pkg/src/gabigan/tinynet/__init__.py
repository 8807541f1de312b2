"""Small numpy network trainer used to score candidate architectures."""

from gabigan.tinynet.network import (
    BuildError,
    ConvBlock,
    DenseBlock,
    Network,
    NetworkSpec,
    build_network,
    grad_check,
    make_spec,
    spec_from_genome,
)
from gabigan.tinynet.train import TrainConfig, accuracy_and_loss, train_with_early_stop

__all__ = [
    "BuildError",
    "ConvBlock",
    "DenseBlock",
    "Network",
    "NetworkSpec",
    "TrainConfig",
    "accuracy_and_loss",
    "build_network",
    "grad_check",
    "make_spec",
    "spec_from_genome",
    "train_with_early_stop",
]

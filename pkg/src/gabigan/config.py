"""Run configuration: a flat, versioned JSON document.

Every key is optional except ``schema_version``; unknown keys and type
mismatches are rejected with a message naming the offending field.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from gabigan.baselines import BaselineVariant
from gabigan.bigan import BiGanConfig
from gabigan.ga import GaConfig
from gabigan.genome import SearchLimits
from gabigan.tinynet.train import TrainConfig

SCHEMA_VERSION = 1
METHODS = ("proposed", "small_set", "large_set", "random")
FITNESS_BACKENDS = ("surrogate", "tinynet")
OUT_DIR_ENV = "GABIGAN_OUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "rings"
    n_samples: int = 400
    input_shape: tuple[int, ...] = (12, 12)
    seed: int = 0
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None
    idx_limit: Optional[int] = None
    val_fraction: float = 0.25

    def build(self):
        from gabigan import datasets

        if self.kind == "idx":
            if not self.idx_images or not self.idx_labels:
                raise ConfigError("field 'idx_images'/'idx_labels': required for dataset_kind 'idx'")
            return datasets.load_idx(self.idx_images, self.idx_labels, self.idx_limit,
                                     self.val_fraction)
        return datasets.make_synthetic_dataset(self.kind, self.n_samples, self.input_shape,
                                               self.seed, val_fraction=self.val_fraction)


# flat key -> (section, attribute)
_SECTIONS = {
    "ga": GaConfig,
    "bigan": BiGanConfig,
    "train": TrainConfig,
    "limits": SearchLimits,
}
_DATASET_KEYS = {
    "dataset_kind": "kind",
    "dataset_samples": "n_samples",
    "dataset_shape": "input_shape",
    "dataset_seed": "seed",
    "idx_images": "idx_images",
    "idx_labels": "idx_labels",
    "idx_limit": "idx_limit",
    "val_fraction": "val_fraction",
}
_VARIANT_KEYS = {
    "small_neurons": "neuron_choices",
    "small_filters": "filter_choices",
    "large_neurons": "neuron_range",
    "large_filters": "filter_range",
}
_TOP = {
    "method": str,
    "fitness": str,
    "seed": int,
    "workers": int,
    "out_dir": str,
    "surrogate_width": float,
    "random_batch": int,
    "random_keep": str,
    "fitness_split": str,
}


def _flat_keys() -> dict[str, tuple[str, str]]:
    keys = {}
    for section, cls in _SECTIONS.items():
        for f in fields(cls):
            keys[f.name] = (section, f.name)
    for k, attr in _DATASET_KEYS.items():
        keys[k] = ("dataset", attr)
    for k, attr in _VARIANT_KEYS.items():
        keys[k] = ("variant", attr)
    return keys


FLAT_KEYS = _flat_keys()


@dataclass(frozen=True)
class RunConfig:
    method: str = "proposed"
    fitness: str = "surrogate"
    seed: int = 0
    workers: int = 1
    out_dir: str = "runs"
    surrogate_width: float = 0.1
    random_batch: int = 10
    random_keep: str = "all"
    fitness_split: str = "val"
    ga: GaConfig = field(default_factory=GaConfig)
    bigan: BiGanConfig = field(default_factory=BiGanConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    limits: SearchLimits = field(default_factory=SearchLimits)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    variant: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"field 'method': must be one of {', '.join(METHODS)}, "
                              f"got {self.method!r}")
        if self.fitness not in FITNESS_BACKENDS:
            raise ConfigError(f"field 'fitness': must be one of {', '.join(FITNESS_BACKENDS)}, "
                              f"got {self.fitness!r}")
        if self.workers < 1:
            raise ConfigError("field 'workers': must be >= 1")
        if self.surrogate_width <= 0:
            raise ConfigError("field 'surrogate_width': must be positive")
        if self.random_batch < 1:
            raise ConfigError("field 'random_batch': must be >= 1")
        if self.random_keep not in ("all", "best"):
            raise ConfigError("field 'random_keep': must be 'all' or 'best'")
        if self.fitness_split not in ("val", "train"):
            raise ConfigError("field 'fitness_split': must be 'val' or 'train'")

    def baseline_variant(self, kind: Optional[str] = None) -> BaselineVariant:
        kind = kind or (self.method if self.method in ("small_set", "large_set") else "large_set")
        return BaselineVariant(kind, **self.variant)

    def with_method(self, method: str) -> "RunConfig":
        return replace(self, method=method)

    def to_flat(self) -> dict[str, Any]:
        out: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
        for k in _TOP:
            out[k] = getattr(self, k)
        for key, (section, attr) in FLAT_KEYS.items():
            if section == "variant":
                if attr in self.variant:
                    out[key] = list(self.variant[attr])
                continue
            value = getattr(getattr(self, section), attr)
            out[key] = list(value) if isinstance(value, tuple) else value
        return out

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_flat(), indent=2, sort_keys=True) + "\n")


def _coerce(key: str, value: Any, default: Any) -> Any:
    """Check ``value`` against the type of the field's default."""
    def bad(expected):
        return ConfigError(f"field '{key}': expected {expected}, got {type(value).__name__}")

    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise bad("bool")
        return value
    if isinstance(default, int) and default is not None:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("int")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise bad("string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise bad("list")
        return tuple(value)
    return value


def _defaults() -> dict[str, Any]:
    d = RunConfig()
    out = {k: getattr(d, k) for k in _TOP}
    for key, (section, attr) in FLAT_KEYS.items():
        if section == "variant":
            out[key] = getattr(BaselineVariant(), attr)
        else:
            out[key] = getattr(getattr(d, section), attr)
    return out


# fields whose default is None but which take a number when set
_OPTIONAL_NUMBERS = {"generations": 1, "budget_evals": 1, "budget_seconds": 1.0, "idx_limit": 1}
_OPTIONAL_STRINGS = {"idx_images", "idx_labels"}


def from_flat(doc: dict[str, Any]) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "schema_version" not in doc:
        raise ConfigError("field 'schema_version': missing")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"field 'schema_version': unsupported version {doc['schema_version']!r}, "
                          f"expected {SCHEMA_VERSION}")
    defaults = _defaults()
    top: dict[str, Any] = {}
    sections: dict[str, dict[str, Any]] = {s: {} for s in (*_SECTIONS, "dataset", "variant")}
    for key, value in doc.items():
        if key == "schema_version":
            continue
        if key not in defaults:
            raise ConfigError(f"field '{key}': unknown field")
        if value is None:
            if key in _OPTIONAL_NUMBERS or key in _OPTIONAL_STRINGS:
                coerced = None
            else:
                raise ConfigError(f"field '{key}': may not be null")
        elif key in _OPTIONAL_NUMBERS:
            coerced = _coerce(key, value, _OPTIONAL_NUMBERS[key])
        elif key in _OPTIONAL_STRINGS:
            coerced = _coerce(key, value, "")
        else:
            coerced = _coerce(key, value, defaults[key])
        if key in _TOP:
            top[key] = coerced
        else:
            section, attr = FLAT_KEYS[key]
            sections[section][attr] = coerced
    built: dict[str, Any] = {}
    for section, cls in (*_SECTIONS.items(), ("dataset", DatasetSpec)):
        try:
            built[section] = cls(**sections[section])
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"section '{section}': {exc}") from None
    try:
        BaselineVariant(**sections["variant"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"section 'variant': {exc}") from None
    return RunConfig(**top, **built, variant=sections["variant"])


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return from_flat(doc)


def resolve_out_dir(cli_value: Optional[str], cfg: RunConfig) -> Path:
    """Command-line flag, then the environment override, then the config value."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(cfg.out_dir)

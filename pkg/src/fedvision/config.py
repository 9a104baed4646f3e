"""Run configuration: one JSON document with per-module sections.

Flags override file values; unknown keys are rejected before any work
starts. All randomness flows from the single root seed, offset per module
by the documented constants below.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import anonymize
from .data import DEFAULT_RATIOS

# per-module seed = root seed + offset
SEED_OFFSETS = {
    "data": 101,
    "split": 211,
    "partition": 307,
    "model": 401,
    "train": 503,
    "dropout": 601,
}


@dataclass
class DataSection:
    count: int = 2460
    image_size: int = 64
    max_objects: int = 3
    train_frac: float = DEFAULT_RATIOS[0]
    val_frac: float = DEFAULT_RATIOS[1]
    test_frac: float = DEFAULT_RATIOS[2]


@dataclass
class ModelSection:
    grid_size: int = 4
    num_classes: int = 2
    hidden_units: int = 256


@dataclass
class TrainSection:
    epochs: int = 60
    batch_size: int = 10
    learning_rate: float = 0.01


@dataclass
class FederatedSection:
    clients: int = 3
    rounds: int = 5
    method: str = "fedavg"
    drop_prob: float = 0.0
    min_fit_clients: int = 1
    server_lr: float = 0.5
    beta1: float = 0.5
    beta2: float = 0.99
    tau: float = 0.5


@dataclass
class EvalSection:
    score_threshold: float = 0.25
    nms_iou: float = 0.5


@dataclass
class AnonymizeSection:
    pad_frac: float = anonymize.DEFAULT_PAD_FRAC
    sigma_floor: float = anonymize.SIGMA_FLOOR
    sigma_divisor: float = anonymize.SIGMA_DIVISOR


@dataclass
class RunConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    federated: FederatedSection = field(default_factory=FederatedSection)
    eval: EvalSection = field(default_factory=EvalSection)
    anonymize: AnonymizeSection = field(default_factory=AnonymizeSection)

    def module_seed(self, module: str) -> int:
        return self.seed + SEED_OFFSETS[module]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


class ConfigError(ValueError):
    pass


def _build_section(cls, values: dict, path: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown config key(s) under {path}: {sorted(unknown)}")
    kwargs = {}
    for name, value in values.items():
        if isinstance(value, dict):
            raise ConfigError(f"{path}.{name} must be a scalar")
        kwargs[name] = value
    return cls(**kwargs)


_SECTIONS = {
    "data": DataSection,
    "model": ModelSection,
    "train": TrainSection,
    "federated": FederatedSection,
    "eval": EvalSection,
    "anonymize": AnonymizeSection,
}


def load_config(path: str | Path | None) -> RunConfig:
    """Parse and validate a config file; None yields the defaults."""
    if path is None:
        return RunConfig()
    try:
        tree = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(tree) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    cfg = RunConfig()
    if "seed" in tree:
        if not isinstance(tree["seed"], int):
            raise ConfigError("seed must be an integer")
        cfg.seed = tree["seed"]
    for name, cls in _SECTIONS.items():
        if name in tree:
            if not isinstance(tree[name], dict):
                raise ConfigError(f"section {name!r} must be a JSON object")
            setattr(cfg, name, _build_section(cls, tree[name], name))
    return cfg

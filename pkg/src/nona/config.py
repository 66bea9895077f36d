"""Experiment configuration: dataclasses plus strict JSON loading."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import SyntheticSpec, Target
from .similarity import SimilarityKind
from .softstep import SoftStepConfig

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Malformed or incomplete configuration."""


@dataclass
class ModelConfig:
    head: str = "nona"
    hidden_dim: int = 200
    embedding_dim: int = 25
    depth: int = 2

    def __post_init__(self):
        if self.head not in ("nona", "dense"):
            raise ConfigError(f"model.head must be 'nona' or 'dense', got {self.head!r}")


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    max_epochs: int = 300
    patience: int = 10
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError("train.patience must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("train.batch_size must be >= 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"train.optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``seed`` drives the split, weight initialisation and batch order;
    ``dataset.seed`` only drives data generation.
    """

    dataset: SyntheticSpec
    model: ModelConfig = field(default_factory=ModelConfig)
    similarity: SimilarityKind = SimilarityKind.NEG_L2
    softstep: SoftStepConfig = field(default_factory=SoftStepConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    with_knn: bool = False
    output_dir: str = "runs"

    def __post_init__(self):
        self.similarity = SimilarityKind(self.similarity)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dataset"]["target"] = self.dataset.target.value
        d["similarity"] = self.similarity.value
        d["softstep"]["family"] = self.softstep.family.value
        d["softstep"]["param_mode"] = self.softstep.param_mode.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys(raw, cls, "")
        ds = raw.get("dataset")
        if not isinstance(ds, dict):
            raise ConfigError("missing required key 'dataset'")
        if "target" not in ds:
            raise ConfigError("missing required key 'dataset.target'")
        try:
            Target(ds["target"])
        except ValueError:
            raise ConfigError(f"dataset.target: unknown target {ds['target']!r}") from None
        sections = {"dataset": SyntheticSpec, "model": ModelConfig,
                    "softstep": SoftStepConfig, "train": TrainConfig}
        kwargs = {}
        for key, value in raw.items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"'{key}' must be an object")
                _check_keys(value, sections[key], key + ".")
                try:
                    kwargs[key] = sections[key](**value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{key}: {exc}") from None
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def _check_keys(raw, klass, prefix):
    known = {f.name for f in fields(klass)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key '{prefix}{key}'")


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(raw)


def resolve_seed(config_seed: int, flag_seed: int | None = None) -> int:
    """Seed precedence: command-line flag, then ``NONA_SEED``, then the config."""
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get("NONA_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"NONA_SEED must be an integer, got {env!r}") from None
    return int(config_seed)

"""Experiment configuration: one YAML file with a section per component.

Unknown sections or keys are rejected.  Paths may be overridden through
``TRLAB_DATA``, ``TRLAB_CHECKPOINT`` and ``TRLAB_OUT``; nothing else reads
the environment.
"""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import yaml

from trlab.data import SyntheticTaskConfig
from trlab.decode import DecodeConfig, ThresholdConfig
from trlab.errors import ConfigError
from trlab.model import ModelConfig
from trlab.train import TrainConfig

PATH_ENV = {"data": "TRLAB_DATA", "checkpoint": "TRLAB_CHECKPOINT", "out_dir": "TRLAB_OUT"}


@dataclass(frozen=True)
class Paths:
    data: str = "runs/data.trds"
    checkpoint: str = "runs/model.trlab"
    out_dir: str = "runs"


@dataclass(frozen=True)
class ExperimentConfig:
    data: SyntheticTaskConfig = field(default_factory=SyntheticTaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    paths: Paths = field(default_factory=Paths)
    model_seed: int = 0

    def __post_init__(self):
        d, m = self.data, self.model
        if (d.vocab_size, d.feat_dim, d.stride) != (m.vocab_size, m.feat_dim, m.stride):
            raise ConfigError("data and model disagree on vocab_size, feat_dim or stride")

    def to_dict(self):
        return dataclasses.asdict(self)

    def config_hash(self):
        """Hash of everything that affects results (paths excluded)."""
        d = self.to_dict()
        d.pop("paths")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTIONS = {
    "data": SyntheticTaskConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "decode": DecodeConfig,
    "threshold": ThresholdConfig,
    "paths": Paths,
}


def _build(cls, values, where):
    if not isinstance(values, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_dict(raw, env=None):
    raw = dict(raw or {})
    env = os.environ if env is None else env
    allowed = set(_SECTIONS) | {"model_seed"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}")
    parts = {name: _build(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()}
    overrides = {k: env[v] for k, v in PATH_ENV.items() if env.get(v)}
    if overrides:
        parts["paths"] = dataclasses.replace(parts["paths"], **overrides)
    seed = raw.get("model_seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("model_seed must be an integer")
    return ExperimentConfig(model_seed=seed, **parts)


def load(path=None, env=None):
    if path is None:
        return from_dict({}, env)
    with open(path) as f:
        return from_dict(yaml.safe_load(f) or {}, env)


def dump(config):
    return yaml.safe_dump(config.to_dict(), sort_keys=False)

"""Experiment configuration: a single JSON document, schema-validated with
unknown keys rejected; every run persists its resolved snapshot.

`GOALFORGE_SEED` in the environment overrides the seed list (CI smoke runs).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..envs import EnvConstants, EnvKind
from ..errors import ConfigError
from ..rl import RlConfig
from ..sampler import SamplerConfig
from ..vae import VaeConfig

METHODS = ("rig", "pi-rig", "oracle")


@dataclass(frozen=True)
class DynamicsConfig:
    epochs: int = 30
    hidden: int = 64
    batch_size: int = 256
    lr: float = 1e-3


@dataclass(frozen=True)
class ProbeConfig:
    """Measured-property thresholds, pinned from pre-runs."""

    r2_zi_min: float = 0.8
    r2_ze_max: float = 0.3
    elbo_drop_min: float = 0.5


@dataclass
class ExperimentConfig:
    env: str = "pusher2"
    method: str = "pi-rig"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    resolution: int = 32
    dataset_size: int = 3000
    labeled_fraction: float = 0.2
    eval_episodes: int = 50
    metric_epochs: int = 10
    eval_episodes_per_epoch: int = 4
    record_wall_clock: bool = False
    log_goals: bool = False
    env_constants: EnvConstants = field(default_factory=EnvConstants)
    vae: VaeConfig = field(default_factory=VaeConfig)
    rl: RlConfig = field(default_factory=RlConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    physics_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        try:
            EnvKind(self.env)
        except ValueError:
            raise ConfigError(f"unknown env {self.env!r}") from None
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.dataset_size < 1:
            raise ConfigError("dataset_size must be >= 1")
        if not 0.0 <= self.labeled_fraction <= 1.0:
            raise ConfigError("labeled_fraction must be in [0, 1]")

    @property
    def kind(self) -> EnvKind:
        return EnvKind(self.env)


_SECTION_TYPES = {
    "env_constants": EnvConstants,
    "vae": VaeConfig,
    "rl": RlConfig,
    "sampler": SamplerConfig,
    "dynamics": DynamicsConfig,
    "probe": ProbeConfig,
}

_COERCIONS = {
    # JSON has no tuples; these fields round-trip through lists
    ("vae", "conv_channels"): tuple,
}


def _build_section(section: str, dc_type, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    known = {f.name: f for f in dataclasses.fields(dc_type)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}")
        if (section, key) in _COERCIONS:
            value = _COERCIONS[(section, key)](value)
        kwargs[key] = value
    try:
        return dc_type(**kwargs)
    except TypeError as e:
        raise ConfigError(f"invalid value in section {section!r}: {e}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _SECTION_TYPES:
            base = _SECTION_TYPES[key]()
            merged = {**dataclasses.asdict(base), **value} if isinstance(value, dict) else value
            kwargs[key] = _build_section(key, _SECTION_TYPES[key], merged)
        else:
            kwargs[key] = value
    cfg = ExperimentConfig(**kwargs)
    seed_env = os.environ.get("GOALFORGE_SEED")
    if seed_env is not None:
        try:
            cfg.seeds = [int(seed_env)]
        except ValueError:
            raise ConfigError(f"GOALFORGE_SEED must be an integer, got {seed_env!r}") from None
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed config JSON at line {e.lineno}: {e.msg}") from None
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["vae"]["conv_channels"] = list(out["vae"]["conv_channels"])
    return out


def persist_snapshot(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "config.resolved.json"
    path.write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
    return path

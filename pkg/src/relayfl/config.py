"""Experiment configuration: sections, defaults and JSON ingestion.

Defaults mirror the reference simulation setup: 60 clients, 500 rounds,
5 local epochs, 5 W / 1 W transmit powers, 50 MHz band, -174 dBm/Hz noise,
batch 20, initial step 0.01 with 0.995 decay, and a 21840-parameter model
payload at 32 bits each.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .channel import ChannelParams
from .errors import ConfigError
from .topology import PartitionConfig, TopologyConfig

SCHEMES = ("proposed", "fedoc", "hfl", "fedmes", "fl_eocd")


@dataclass(frozen=True)
class TrainingConfig:
    rounds: int = 500
    epochs: int = 5
    batch_size: int = 20
    lr_schedule: str = "exponential"
    initial_lr: float = 0.01
    lr_decay: float = 0.995
    exact_gradients: bool = True

    def validate(self) -> None:
        if self.rounds < 1:
            raise ConfigError("training.rounds: must be >= 1")
        if self.epochs < 1:
            raise ConfigError("training.epochs: must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("training.batch_size: must be >= 1")
        if self.lr_schedule not in ("exponential", "harmonic"):
            raise ConfigError("training.lr_schedule: must be 'exponential' or 'harmonic'")
        if self.initial_lr <= 0 or self.lr_decay <= 0:
            raise ConfigError("training: learning-rate parameters must be positive")
        if self.lr_schedule == "harmonic" and self.epochs < 2:
            raise ConfigError("training.lr_schedule: 'harmonic' needs epochs >= 2")


@dataclass(frozen=True)
class TaskConfig:
    kind: str = "quadratic"
    dimension: int | None = None
    center_scale: float = 1.0
    gradient_noise: float = 0.0
    init_scale: float | None = None  # None: task-specific default
    num_features: int = 4
    samples_per_class: int = 40
    dataset_path: str | None = None

    def validate(self) -> None:
        if self.kind not in ("quadratic", "classification"):
            raise ConfigError("task.kind: must be 'quadratic' or 'classification'")
        if self.center_scale <= 0:
            raise ConfigError("task.center_scale: must be positive")
        if self.init_scale is not None and self.init_scale < 0:
            raise ConfigError("task.init_scale: must be >= 0")


@dataclass(frozen=True)
class SchedulerConfig:
    conflict: str = "link"
    local_search_sweeps: int = 1
    t_max_override: float | None = None

    def validate(self) -> None:
        if self.conflict not in ("link", "node"):
            raise ConfigError("scheduler.conflict: must be 'link' or 'node'")
        if self.local_search_sweeps < 1:
            raise ConfigError("scheduler.local_search_sweeps: must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=lambda: TopologyConfig(num_cells=3, num_clients=60))
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    schemes: tuple[str, ...] = ("proposed", "fedoc", "hfl")
    seeds: tuple[int, ...] = (1,)
    output_dir: str = "results"

    def validate(self) -> None:
        self.topology.validate()
        self.partition.validate()
        self.training.validate()
        self.task.validate()
        self.scheduler.validate()
        if not self.schemes:
            raise ConfigError("schemes: must list at least one scheme")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"schemes: unknown scheme {s!r} (choose from {SCHEMES})")
        if not self.seeds:
            raise ConfigError("seeds: must list at least one seed")


_SECTION_BUILDERS = {
    "topology": TopologyConfig,
    "partition": PartitionConfig,
    "channel": ChannelParams,
    "training": TrainingConfig,
    "task": TaskConfig,
    "scheduler": SchedulerConfig,
}


def _build_section(name: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    fields = {f for f in cls.__dataclass_fields__ if cls.__dataclass_fields__[f].init}
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}: unknown field")
    coerced = dict(data)
    for key in ("epoch_time_range_s",):
        if key in coerced and isinstance(coerced[key], list):
            coerced[key] = tuple(coerced[key])
    if "sample_overrides" in coerced and coerced["sample_overrides"]:
        coerced["sample_overrides"] = {int(k): int(v) for k, v in coerced["sample_overrides"].items()}
    try:
        return cls(**coerced)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root: expected an object")
    kwargs = {}
    for name, cls in _SECTION_BUILDERS.items():
        if name in data:
            kwargs[name] = _build_section(name, cls, data[name])
    if "topology" not in kwargs:
        raise ConfigError("topology: section is required")
    for key in ("schemes", "seeds"):
        if key in data:
            kwargs[key] = tuple(data[key])
    if "output_dir" in data:
        kwargs["output_dir"] = str(data["output_dir"])
    extra = set(data) - set(_SECTION_BUILDERS) - {"schemes", "seeds", "output_dir"}
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown section")
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def resolved_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved config as plain JSON data (defaults filled in)."""
    out: dict = {}
    for name, _ in _SECTION_BUILDERS.items():
        section = getattr(cfg, name)
        fields = {
            f: getattr(section, f)
            for f in section.__dataclass_fields__
            if section.__dataclass_fields__[f].init
        }
        out[name] = _jsonable(fields)
    out["schemes"] = list(cfg.schemes)
    out["seeds"] = list(cfg.seeds)
    out["output_dir"] = cfg.output_dir
    return out


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(resolved_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

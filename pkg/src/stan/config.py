"""Run configuration: one YAML file, validated into dataclasses."""
from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .data import SynthSpec
from .models import DiscriminatorConfig, GeneratorConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    base_channels: int = 4
    convlstm_hidden: int | None = None
    half_window: int = 5


@dataclass
class RunConfig:
    seed: int = 7
    scale: int = 64
    data: str | None = None
    out: str | None = None
    ckpt: str | None = None
    threshold: float | None = None
    merge_gap: int = 50
    mode: str = "event"
    norm_scope: str = "clip"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)

    def __post_init__(self):
        if self.mode not in ("frame", "event"):
            raise ConfigError(f"mode must be 'frame' or 'event', got {self.mode!r}")
        if self.norm_scope not in ("clip", "global"):
            raise ConfigError(f"norm_scope must be 'clip' or 'global', got {self.norm_scope!r}")
        if self.threshold is not None and not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.merge_gap < 0:
            raise ConfigError("merge_gap must be >= 0")

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(self.scale, self.model.base_channels, self.model.half_window, self.model.convlstm_hidden)

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(self.scale, self.model.base_channels, 2 * self.model.half_window + 1)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _check_type(cls, name, value, default):
    if value is None or default is None or isinstance(default, tuple):
        return value
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{cls.__name__}.{name}: expected {type(default).__name__}, got {value!r}")
    return value


def _build(cls, raw: dict | None):
    raw = dict(raw or {})
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in raw.items():
        default = getattr(defaults, name)
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = _check_type(cls, name, value, default)
    if cls is SynthSpec:
        try:
            return SynthSpec.from_dict(kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def from_dict(raw: dict) -> RunConfig:
    raw = dict(raw or {})
    sections = {"model": ModelConfig, "train": TrainConfig, "synth": SynthSpec}
    built = {k: _build(cls, raw.pop(k, None)) for k, cls in sections.items()}
    top = _build(RunConfig, raw)
    return with_seed(dataclasses.replace(top, **built), top.seed)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """The top-level seed drives every stochastic component."""
    return dataclasses.replace(cfg, seed=seed, train=dataclasses.replace(cfg.train, seed=seed),
                               synth=dataclasses.replace(cfg.synth, seed=seed))


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping")
    return from_dict(raw)


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))

"""Run configuration: one YAML tree, every field defaulted."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from roadgen.discriminator import DiscriminatorConfig
from roadgen.evolution import GAConfig
from roadgen.geometry import BLOCK_SIZE, LANE_WIDTH, MAP_SIZE, STEP
from roadgen.simulator import AgentConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    workdir: str = "run"
    dataset: str = "dataset.jsonl"
    checkpoint: str = "model.ckpt"
    population: str = "population"
    tests: str = "tests"
    results: str = "results"
    analysis: str = "analysis"


@dataclass(frozen=True)
class Geometry:
    block_size: int = BLOCK_SIZE
    step: float = STEP
    lane_width: float = LANE_WIDTH
    map_size: float = MAP_SIZE


@dataclass(frozen=True)
class Seeding:
    n_roads: int = 2000
    val_fraction: float = 0.1


@dataclass(frozen=True)
class Analysis:
    budget_seconds: float = 7200.0
    n_samples: int = 100
    novelty_threshold: float = 0.2


@dataclass(frozen=True)
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    geometry: Geometry = field(default_factory=Geometry)
    simulator: AgentConfig = field(default_factory=AgentConfig)
    seeding: Seeding = field(default_factory=Seeding)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    ga: GAConfig = field(default_factory=GAConfig)
    analysis: Analysis = field(default_factory=Analysis)
    seed: int = 0

    # -- resolved views -------------------------------------------------------

    @property
    def workdir(self) -> Path:
        return Path(self.paths.workdir)

    def path(self, name: str) -> Path:
        p = Path(getattr(self.paths, name))
        return p if p.is_absolute() else self.workdir / p

    def ga_config(self) -> GAConfig:
        g = self.geometry
        return replace(self.ga, rng_seed=self.seed, block_size=g.block_size, step=g.step,
                       map_size=g.map_size)

    def discriminator_config(self) -> DiscriminatorConfig:
        return replace(self.discriminator, seed=self.seed, block_size=self.geometry.block_size)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        if hasattr(default, "__dataclass_fields__"):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple):
            kwargs[name] = tuple(value)
        elif isinstance(default, bool):
            kwargs[name] = bool(value)
        elif isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{where}.{name}: expected an integer, got {value}")
            kwargs[name] = int(value)
        elif isinstance(default, float):
            kwargs[name] = float(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(data: dict) -> RunConfig:
    cfg = _build(RunConfig, data or {}, "config")
    validate(cfg)
    return cfg


def load(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(data or {})


def override(cfg: RunConfig, section: str, **values) -> RunConfig:
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    try:
        new = replace(cfg, **{section: replace(getattr(cfg, section), **values)})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    validate(new)
    return new


def validate(cfg: RunConfig) -> None:
    sim, geo = cfg.simulator, cfg.geometry
    checks = [
        (geo.block_size >= 1, "geometry.block_size must be positive"),
        (geo.step > 0, "geometry.step must be positive"),
        (geo.lane_width > sim.car_width, "geometry.lane_width must exceed simulator.car_width"),
        (geo.map_size > 0, "geometry.map_size must be positive"),
        (0 <= sim.tolerance <= 1, "simulator.tolerance must lie in [0, 1]"),
        (sim.v_max > 0 and sim.timestep > 0, "simulator speeds and timestep must be positive"),
        (sim.lookahead > 0 and sim.max_lateral_accel > 0, "simulator lookahead and lateral limit must be positive"),
        (sim.lookahead <= geo.block_size * geo.step, "simulator.lookahead exceeds the road length"),
        (cfg.seeding.n_roads >= 1, "seeding.n_roads must be positive"),
        (0 < cfg.seeding.val_fraction < 1, "seeding.val_fraction must lie in (0, 1)"),
        (cfg.analysis.budget_seconds > 0, "analysis.budget_seconds must be positive"),
        (cfg.analysis.n_samples >= 1, "analysis.n_samples must be positive"),
        (cfg.discriminator.epochs >= 0 and cfg.discriminator.batch_size >= 1,
         "discriminator epochs/batch_size out of range"),
        (cfg.ga.epochs >= 0, "ga.epochs must be non-negative"),
        (2 * cfg.ga.swap_len_range[1] <= geo.block_size, "ga.swap_len_range too long for block_size"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)

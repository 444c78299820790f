"""Run configuration: one dataclass per pipeline section, strict JSON loading.

Unknown keys are rejected with their dotted path so a typo in a config file
fails fast instead of silently falling back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields, is_dataclass

from .errors import ConfigError
from .frame_sampler import SamplerConfig
from .mcl import FilterConfig, MotionNoiseConfig
from .mining import MiningConfig
from .training import TrainingConfig
from .world import RenderConfig

__all__ = [
    "WorldConfig",
    "TrajectoryConfig",
    "LocalizeConfig",
    "EvalConfig",
    "RunConfig",
    "config_from_dict",
    "load_config",
    "config_to_dict",
]


@dataclass
class WorldConfig:
    """World synthesis parameters."""

    extent_m: float = 400.0
    num_seasons: int = 3
    sigma_season: float = 0.08

    def __post_init__(self):
        if self.extent_m < 100.0:
            raise ConfigError(f"world.extent_m must be >= 100, got {self.extent_m}")
        if self.num_seasons < 1:
            raise ConfigError(f"world.num_seasons must be >= 1, got {self.num_seasons}")


@dataclass
class TrajectoryConfig:
    """Bounded-curvature trajectory generation."""

    length_m: float = 500.0
    dt_s: float = 0.5
    v_min: float = 1.5
    v_max: float = 2.5
    margin_m: float = 40.0

    def __post_init__(self):
        if self.length_m <= 0.0:
            raise ConfigError("trajectory.length_m must be positive")
        if self.dt_s <= 0.0:
            raise ConfigError("trajectory.dt_s must be positive")
        if not 0.0 < self.v_min <= self.v_max:
            raise ConfigError("trajectory speeds must satisfy 0 < v_min <= v_max")


@dataclass
class LocalizeConfig:
    """Online localization loop on top of the particle filter."""

    observe_every: int = 1
    obs_season: int = 0
    map_season: int = 0
    odom_noise_trans: float = 0.05
    odom_noise_rot: float = 0.02

    def __post_init__(self):
        if self.observe_every < 1:
            raise ConfigError("localize.observe_every must be >= 1")
        if self.odom_noise_trans < 0.0 or self.odom_noise_rot < 0.0:
            raise ConfigError("localize odometry noise scales must be non-negative")


@dataclass
class EvalConfig:
    """Metric settings for trajectory comparison and retrieval maps."""

    success_radii_m: tuple[float, ...] = (10.0, 25.0, 50.0)
    grid_size: int = 30
    map_extent_m: float = 150.0

    def __post_init__(self):
        self.success_radii_m = tuple(float(r) for r in self.success_radii_m)
        if any(r <= 0.0 for r in self.success_radii_m):
            raise ConfigError("eval.success_radii_m must be positive")
        if self.grid_size < 2:
            raise ConfigError("eval.grid_size must be >= 2")


@dataclass
class RunConfig:
    """Top-level configuration composed of per-stage sections."""

    seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    localize: LocalizeConfig = field(default_factory=LocalizeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _build(cls, data, path: str):
    """Instantiate a (possibly nested) config dataclass from a dict."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(where + k for k in unknown))}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        target = type(f.default_factory()) if f.default_factory is not dataclasses.MISSING else None
        dotted = f"{path}.{name}" if path else name
        if target is not None and is_dataclass(target):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted}: expected an object")
            kwargs[name] = _build(target, value, dotted)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def _plain(value):
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def config_to_dict(cfg: RunConfig) -> dict:
    return _plain(cfg)

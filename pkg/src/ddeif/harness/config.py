"""Simulation configuration, YAML (de)serialization and scenario presets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..controller import ControllerGains
from ..dynamics import DisturbanceModel
from ..estimator import NoiseConfig, PriorConfig
from ..network import LossSchedule, LossWindow
from ..sensor import CameraConfig, FormationConfig
from ..trajectory import TrajectoryConfig


class ConfigError(ValueError):
    """Invalid or unreadable simulation configuration."""


MODES = ("isolated", "in_loop")
CONTROL_SOURCES = ("per_agent", "agent0")
INIT_MODES = ("measurement", "truth")


@dataclass
class SimConfig:
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    formation: FormationConfig = field(default_factory=FormationConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    disturbance: DisturbanceModel = field(default_factory=DisturbanceModel)
    prior: PriorConfig = field(default_factory=PriorConfig)
    loss: LossSchedule = field(default_factory=LossSchedule)
    controller: ControllerGains = field(default_factory=ControllerGains)
    mode: str = "isolated"
    control_source: str = "per_agent"
    init: str = "measurement"
    agents: int = 4
    physics_hz: float = 240.0
    estimator_dt: float = 0.05
    duration: float = 60.0
    latency: int = 0
    dropout: float = 0.0
    report_agent: int = 0
    seed: int = 0
    runs: int = 50

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.control_source not in CONTROL_SOURCES:
            raise ConfigError(f"control_source must be one of {CONTROL_SOURCES}")
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {INIT_MODES}")
        if self.agents < 1:
            raise ConfigError("need at least one agent")
        if not 0 <= self.report_agent < self.agents:
            raise ConfigError("report_agent out of range")
        if self.estimator_dt <= 0.0 or self.physics_hz <= 0.0:
            raise ConfigError("rates must be positive")
        if self.physics_hz * self.estimator_dt < 1.0:
            raise ConfigError("physics must run at least as fast as the estimator")
        if self.duration <= self.trajectory.ramp:
            raise ConfigError("duration must exceed the trajectory ramp")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if not 0.0 <= self.dropout <= 1.0:
            raise ConfigError("dropout must be a probability")

    @property
    def ticks(self) -> int:
        return int(round(self.duration / self.estimator_dt))

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimConfig":
        data = dict(data)
        sections = {
            "trajectory": TrajectoryConfig,
            "camera": CameraConfig,
            "formation": FormationConfig,
            "noise": NoiseConfig,
            "disturbance": DisturbanceModel,
            "prior": PriorConfig,
            "controller": ControllerGains,
        }
        kwargs: dict[str, Any] = {}
        try:
            for name, section_cls in sections.items():
                if name in data:
                    kwargs[name] = _build(section_cls, data.pop(name), name)
            if "loss" in data:
                kwargs["loss"] = _build_loss(data.pop("loss"))
            unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            return cls(**kwargs, **data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def _plain(obj: Any) -> Any:
    """Turn tuples/frozensets into lists so the dict is YAML-safe."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, frozenset):
        return sorted(_plain(v) for v in obj)
    return obj


def _build(section_cls: type, values: Any, name: str) -> Any:
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    allowed = {f.name for f in dataclasses.fields(section_cls)}
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return section_cls(**values)


def _build_loss(values: Any) -> LossSchedule:
    if not isinstance(values, dict) or set(values) - {"windows"}:
        raise ConfigError("loss section must be a mapping with a 'windows' list")
    windows = []
    for w in values.get("windows", []):
        w = dict(w)
        w["links"] = frozenset(tuple(link) for link in w.get("links", []))
        windows.append(LossWindow(**w))
    return LossSchedule(windows)


def load_config(path: Path | str) -> SimConfig:
    """Read a config file; a run manifest (with a ``config`` section) also works."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return SimConfig.from_dict(data)


def dump_config(cfg: SimConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


BLACKOUT = (20.0, 40.0)


def scenario(name: str) -> SimConfig:
    """Preset configurations for the four evaluation cases."""
    if name in ("pirouette", "pirouette-commloss"):
        cfg = SimConfig(
            trajectory=TrajectoryConfig(kind="pirouette", center=(0.0, 2.5, -3.0), radius=2.5, speed=0.5, ramp=10.0),
            mode="isolated",
            duration=60.0,
        )
    elif name in ("lissajous", "lissajous-commloss"):
        cfg = SimConfig(
            trajectory=TrajectoryConfig(kind="lissajous", center=(0.0, 0.0, -3.0), f_n=0.04, f_e=0.02, ramp=15.0),
            mode="in_loop",
            duration=65.0,
        )
    else:
        raise ConfigError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    if name.endswith("-commloss"):
        cfg.loss = LossSchedule.blackout(*BLACKOUT)
    return cfg


SCENARIOS = ("pirouette", "pirouette-commloss", "lissajous", "lissajous-commloss")

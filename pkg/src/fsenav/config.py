"""Experiment configuration and its sectioned ``key = value`` file format.

Example::

    [map]
    size_cells = 960
    [agent]
    success_radius = 1.0

Every section maps onto one dataclass; unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import ConfigError
from .frontier import FrontierConfig
from .gridmap import MapConfig
from .planner import PlannerConfig
from .policy import REFERENCE_PPO, PPOConfig, config_hash
from .reward import RewardConfig
from .simworld import AgentConfig, SceneConfig, SensorConfig


@dataclass(frozen=True)
class RunSettings:
    global_interval: int = 25
    min_episode_length: float = 1.0
    episodes_per_scene: int = 10


@dataclass(frozen=True)
class TrainSettings:
    total_env_steps: int = 200_000
    episodes_per_update: int = 8
    policy_seed: int = 0
    log_every: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    map: MapConfig = field(default_factory=lambda: MapConfig(size_cells=960))
    frontier: FrontierConfig = field(default_factory=FrontierConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    run: RunSettings = field(default_factory=RunSettings)
    train: TrainSettings = field(default_factory=TrainSettings)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def replace(self, **sections) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)

    def with_reference_hparams(self) -> "ExperimentConfig":
        return dataclasses.replace(self, ppo=dataclasses.replace(self.ppo, lr=REFERENCE_PPO.lr))


SECTIONS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_value(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = base or ExperimentConfig()
    updates = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        current = getattr(cfg, section)
        known = {f.name for f in fields(current)}
        values = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _parse_value(raw, getattr(current, key), f"[{section}] {key}")
        try:
            updates[section] = dataclasses.replace(current, **values)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    return dataclasses.replace(cfg, **updates)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name in SECTIONS:
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(section):
            v = getattr(section, f.name)
            if isinstance(v, tuple):
                v = ", ".join(v)
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)


def eval_preset() -> ExperimentConfig:
    """24 m worlds, 1 m success radius, mapping and planning at 0.1 m.

    The map still covers twice the world extent so any start fits; the
    policy input keeps its 30 x 30 size (120-cell crop pooled by 4).
    """
    base = ExperimentConfig()
    return base.replace(
        map=MapConfig(size_cells=480, resolution=0.1, crop_cells=120, downsample_factor=4),
        planner=dataclasses.replace(base.planner, inflation_cells=2, stop_margin=0.15),
        agent=dataclasses.replace(base.agent, success_radius=1.0),
    )


PRESETS = {"default": ExperimentConfig, "eval24": eval_preset}

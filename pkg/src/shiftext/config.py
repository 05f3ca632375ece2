"""Episode, agent and scenario configuration with JSON round-tripping.

Defaults follow the published cost table (revenue 60, wages 1/2, distance
rates 0.1, lost penalty 60, extension pay 3), the time/extension table
(speed 100, 6-period extensions, at most 3 notifications, acceptance 0.7) and
the DQN table (replay 100, minibatch 64, 1000 episodes, gamma 0.7, ...).
Values the source leaves open (map extent, assignment window, shift length,
feature caps) are documented on the fields.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .world import ConfigError


@dataclass(frozen=True)
class Economics:
    revenue: float = 60.0  # f_r
    committed_wage: float = 1.0  # omega^c per on-shift period
    committed_distance_rate: float = 0.1  # nu^c
    occasional_fee: float = 2.0  # omega^o per request
    occasional_distance_rate: float = 0.1  # nu^o
    lost_penalty: float = 60.0  # theta
    extension_pay: float = 3.0  # rho per extension period


@dataclass(frozen=True)
class ExtensionParams:
    periods: int = 6  # eta
    max_notified: int = 3  # alpha
    accept_prob: float = 0.7  # pr_m
    allow_repeat: bool = True  # an extended courier may be offered another extension


@dataclass(frozen=True)
class FeatureCaps:
    """Upper bounds for min-max scaling; values above a cap clip to 1."""

    requests: float = 20.0
    committed: float = 20.0
    occasional: float = 10.0
    ending: float = 5.0
    lost: float = 200.0
    extensions: float = 50.0


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: int = 200
    period_minutes: float = 6.0
    economics: Economics = field(default_factory=Economics)
    extension: ExtensionParams = field(default_factory=ExtensionParams)
    request_rate: float = 2.0
    occasional_rate: float = 1.0
    patience_mean: float = 1.0
    assignment_window: int = 5
    n_couriers: int = 50
    # short shifts keep the committed fleet scarce enough that unserved requests occur
    shift_length: int = 4
    n_pickup: int = 40
    n_delivery: int = 40
    map_extent: float = 100.0
    speed: float = 100.0
    initial_requests: int = 4
    initial_committed: int = 2
    initial_occasional: int = 3
    world_seed: int = 7
    schedule_seed: int = 11
    features: FeatureCaps = field(default_factory=FeatureCaps)

    def __post_init__(self):
        validate_episode_config(self)

    def replace(self, **changes) -> EpisodeConfig:
        return dataclasses.replace(self, **changes)

    def with_economics(self, **changes) -> EpisodeConfig:
        return dataclasses.replace(self, economics=dataclasses.replace(self.economics, **changes))

    def with_extension(self, **changes) -> EpisodeConfig:
        return dataclasses.replace(self, extension=dataclasses.replace(self.extension, **changes))


def validate_episode_config(cfg: EpisodeConfig) -> None:
    def need(ok: bool, name: str, value: Any, rule: str) -> None:
        if not ok:
            raise ConfigError(f"env.{name}={value!r}: {rule}")

    need(cfg.horizon >= 0, "horizon", cfg.horizon, "must be >= 0")
    need(cfg.request_rate >= 0, "request_rate", cfg.request_rate, "must be >= 0")
    need(cfg.occasional_rate >= 0, "occasional_rate", cfg.occasional_rate, "must be >= 0")
    need(cfg.patience_mean >= 0, "patience_mean", cfg.patience_mean, "must be >= 0")
    need(cfg.assignment_window >= 0, "assignment_window", cfg.assignment_window, "must be >= 0")
    need(cfg.n_couriers >= 0, "n_couriers", cfg.n_couriers, "must be >= 0")
    need(cfg.shift_length >= 1, "shift_length", cfg.shift_length, "must be >= 1")
    need(cfg.n_couriers == 0 or cfg.shift_length <= max(cfg.horizon, 1), "shift_length", cfg.shift_length,
         "must not exceed horizon")
    need(cfg.speed > 0, "speed", cfg.speed, "must be > 0")
    need(cfg.map_extent > 0, "map_extent", cfg.map_extent, "must be > 0")
    need(cfg.n_pickup > 0 and cfg.n_delivery > 0, "n_pickup/n_delivery", (cfg.n_pickup, cfg.n_delivery),
         "must be > 0")
    need(min(cfg.initial_requests, cfg.initial_committed, cfg.initial_occasional) >= 0, "initial_*",
         (cfg.initial_requests, cfg.initial_committed, cfg.initial_occasional), "must be >= 0")
    ext = cfg.extension
    need(ext.periods >= 1, "extension.periods", ext.periods, "must be >= 1")
    need(ext.max_notified >= 0, "extension.max_notified", ext.max_notified, "must be >= 0")
    need(0.0 <= ext.accept_prob <= 1.0, "extension.accept_prob", ext.accept_prob, "must be in [0, 1]")
    for f in fields(Economics):
        v = getattr(cfg.economics, f.name)
        need(v >= 0, f"economics.{f.name}", v, "must be >= 0")
    for f in fields(FeatureCaps):
        v = getattr(cfg.features, f.name)
        need(v > 0, f"features.{f.name}", v, "must be > 0")


@dataclass(frozen=True)
class AgentConfig:
    episodes: int = 1000
    epsilon_start: float = 0.99999
    epsilon_decay: float = 0.99999  # multiplicative retention per decision epoch
    epsilon_min: float = 0.01
    gamma: float = 0.7
    target_sync: int = 5  # zeta, in global decision epochs
    batch_size: int = 64
    memory_size: int = 100
    learning_rate: float = 0.01
    hidden_layers: tuple[int, ...] = (64, 64, 64, 64)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    reward_scale: float = 1.0  # rewards are multiplied by this before storage
    checkpoint_every: int = 0  # episodes; 0 disables intermediate checkpoints

    def __post_init__(self):
        def need(ok, name, value, rule):
            if not ok:
                raise ConfigError(f"agent.{name}={value!r}: {rule}")

        need(self.episodes >= 0, "episodes", self.episodes, "must be >= 0")
        need(0.0 <= self.epsilon_min <= self.epsilon_start <= 1.0, "epsilon_start/epsilon_min",
             (self.epsilon_start, self.epsilon_min), "need 0 <= min <= start <= 1")
        need(0.0 < self.epsilon_decay <= 1.0, "epsilon_decay", self.epsilon_decay, "must be in (0, 1]")
        need(0.0 < self.gamma <= 1.0, "gamma", self.gamma, "must be in (0, 1]")
        need(self.target_sync >= 1, "target_sync", self.target_sync, "must be >= 1")
        need(1 <= self.batch_size <= self.memory_size, "batch_size", self.batch_size,
             "must be in [1, memory_size]")
        need(self.learning_rate > 0, "learning_rate", self.learning_rate, "must be > 0")
        need(len(self.hidden_layers) >= 1 and all(h > 0 for h in self.hidden_layers), "hidden_layers",
             self.hidden_layers, "must be a non-empty list of positive widths")
        need(self.reward_scale > 0, "reward_scale", self.reward_scale, "must be > 0")

    def replace(self, **changes) -> AgentConfig:
        return dataclasses.replace(self, **changes)


def to_jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{prefix}.{key}: unknown field")
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, f"{prefix}.{key}")
        elif isinstance(default, tuple):
            kwargs[key] = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{prefix}.{key}={value!r}: expected a boolean")
            kwargs[key] = value
        elif isinstance(default, (int, float)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{prefix}.{key}={value!r}: expected a number")
            if isinstance(default, int) and not float(value).is_integer():
                raise ConfigError(f"{prefix}.{key}={value!r}: expected an integer")
            kwargs[key] = type(default)(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def episode_config_from_dict(data: dict) -> EpisodeConfig:
    return _build(EpisodeConfig, data, "env")


def agent_config_from_dict(data: dict) -> AgentConfig:
    return _build(AgentConfig, data, "agent")


@dataclass(frozen=True)
class ScenarioConfig:
    env: EpisodeConfig = field(default_factory=EpisodeConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    seed: int = 0
    runs: int = 30
    episodes_per_run: int = 100
    workers: int = 1
    out: str = "results"

    def to_dict(self) -> dict:
        return to_jsonable(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    if "config" in data and isinstance(data["config"], dict):
        # a run manifest embeds the resolved scenario under "config"
        data = data["config"]
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key == "env":
            kwargs["env"] = episode_config_from_dict(value)
        elif key == "agent":
            kwargs["agent"] = agent_config_from_dict(value)
        elif key in ("seed", "runs", "episodes_per_run", "workers"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key}={value!r}: expected an integer")
            kwargs[key] = value
        elif key == "out":
            kwargs[key] = str(value)
        else:
            raise ConfigError(f"{key}: unknown field")
    cfg = ScenarioConfig(**kwargs)
    if cfg.runs < 1:
        raise ConfigError(f"runs={cfg.runs}: must be >= 1")
    if cfg.episodes_per_run < 1:
        raise ConfigError(f"episodes_per_run={cfg.episodes_per_run}: must be >= 1")
    return cfg


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(data)

"""Run configuration: one JSON document covering every tunable.

An empty file (or ``{}``) yields the defaults.  Unknown keys are rejected so
that a typo never silently falls back to a default.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .agents import ALGORITHMS, Td3Config, config_dict
from .environment import EnvConfig
from .kinematics import ExcavatorGeometry
from .reward import VARIANTS, RewardWeights
from .trajectory import DEFAULT_LEVEL_OFFSETS, DEFAULT_N_POINTS, WaypointSchedule


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    schedule: WaypointSchedule = field(default_factory=WaypointSchedule)
    level_offsets: tuple = DEFAULT_LEVEL_OFFSETS
    n_points: int = DEFAULT_N_POINTS


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    algorithm: str = "td3"
    reward_variant: str = "independent"
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    geometry: ExcavatorGeometry = field(default_factory=ExcavatorGeometry)
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: Td3Config = field(default_factory=Td3Config)
    eval: EvalConfig = field(default_factory=EvalConfig)
    checkpoint_every: int = 100

    def env_config(self) -> EnvConfig:
        """Environment config with the run-level reward settings folded in."""
        return dataclasses.replace(self.env, reward_variant=self.reward_variant, weights=self.reward_weights)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_ENV_KEYS = ("dt", "episode_len", "target_x", "target_y", "target_z", "ground_z",
             "penetration_margin", "actuator_lag_tau", "termination_penalty")
_SCHEDULE_KEYS = ("steps_per_waypoint", "mode", "tolerance", "min_steps")


def to_dict(cfg: RunConfig) -> dict:
    env = {k: getattr(cfg.env, k) for k in _ENV_KEYS}
    for k in ("target_x", "target_y", "target_z"):
        env[k] = list(env[k])
    return {
        "seed": cfg.seed,
        "algorithm": cfg.algorithm,
        "reward_variant": cfg.reward_variant,
        "reward_weights": {"c1": cfg.reward_weights.c1, "c2": cfg.reward_weights.c2},
        "geometry": cfg.geometry.to_dict(),
        "env": env,
        "agent": config_dict(cfg.agent),
        "eval": {
            **{k: getattr(cfg.eval.schedule, k) for k in _SCHEDULE_KEYS},
            "level_offsets": list(cfg.eval.level_offsets),
            "n_points": cfg.eval.n_points,
        },
        "checkpoint_every": cfg.checkpoint_every,
    }


def dumps(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"


def _section(d, name: str, allowed) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"{name}: expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(unknown)}")
    return d


def _build(name: str, factory, kwargs: dict):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def from_dict(d: Optional[dict]) -> RunConfig:
    d = _section(d or {}, "config", [f.name for f in dataclasses.fields(RunConfig)])
    default = RunConfig()
    geom = _build("geometry", ExcavatorGeometry,
                  _section(d.get("geometry"), "geometry", default.geometry.to_dict()))
    weights = _build("reward_weights", RewardWeights,
                     _section(d.get("reward_weights"), "reward_weights", ("c1", "c2")))
    env_kw = _section(d.get("env"), "env", _ENV_KEYS)
    env = _build("env", EnvConfig, {k: tuple(v) if isinstance(v, list) else v for k, v in env_kw.items()})
    agent_kw = _section(d.get("agent"), "agent", [f.name for f in dataclasses.fields(Td3Config)])
    agent = _build("agent", Td3Config, agent_kw)
    ev = _section(d.get("eval"), "eval", (*_SCHEDULE_KEYS, "level_offsets", "n_points"))
    schedule = _build("eval", WaypointSchedule, {k: ev[k] for k in _SCHEDULE_KEYS if k in ev})
    ev_cfg = EvalConfig(
        schedule,
        tuple(float(z) for z in ev.get("level_offsets", DEFAULT_LEVEL_OFFSETS)),
        int(ev.get("n_points", DEFAULT_N_POINTS)),
    )
    if ev_cfg.n_points < 2:
        raise ConfigError("eval.n_points: must be >= 2")

    seed = d.get("seed", default.seed)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
    algorithm = d.get("algorithm", default.algorithm)
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm: must be one of {ALGORITHMS}, got {algorithm!r}")
    variant = d.get("reward_variant", default.reward_variant)
    if variant not in VARIANTS:
        raise ConfigError(f"reward_variant: must be one of {VARIANTS}, got {variant!r}")
    every = d.get("checkpoint_every", default.checkpoint_every)
    if not isinstance(every, int) or every < 1:
        raise ConfigError(f"checkpoint_every: expected an integer >= 1, got {every!r}")
    return RunConfig(seed, algorithm, variant, weights, geom, env, agent, ev_cfg, every)


def loads(text: str, source: str = "<string>") -> RunConfig:
    if not text.strip():
        return RunConfig()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return from_dict(d)


def load_config(path) -> RunConfig:
    path = Path(path)
    return loads(path.read_text(), str(path))

"""Point-chasing environment on top of the kinematic excavator.

The observation is the 10-vector ``[p_x, p_y, p_z, t_x, t_y, t_z, u_1..u_4]``:
bucket-tip position, target position and the previous normalized command.
Actions are normalized joint speeds in ``[-1, 1]^4`` scaled by the joint
speed limits.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .kinematics import (
    CartesianPoint,
    ExcavatorGeometry,
    JointState,
    forward_kinematics,
    integrate,
    is_reachable,
)
from .reward import (
    VARIANTS,
    RewardBreakdown,
    RewardWeights,
    euclidean_breakdown,
    independent_reward,
)

OBS_DIM = 10
ACT_DIM = 4
HOME_POSE = JointState(0.0, 0.9, -1.95, -0.52)
MAX_TARGET_ATTEMPTS = 10_000


class TargetSamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.05
    episode_len: int = 2048
    target_x: tuple = (2.0, 5.0)
    target_y: tuple = (-3.0, 3.0)
    target_z: tuple = (-1.0, 1.5)
    ground_z: float = -1.0
    penetration_margin: float = 0.3
    actuator_lag_tau: Optional[float] = None
    # added to the training reward on ground penetration; 0 disables
    termination_penalty: float = -1000.0
    reward_variant: str = "independent"
    weights: RewardWeights = field(default_factory=RewardWeights)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.episode_len) != self.episode_len or self.episode_len < 1:
            raise ValueError(f"episode_len must be an integer >= 1, got {self.episode_len}")
        for name in ("target_x", "target_y", "target_z"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name}: min {lo} exceeds max {hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not self.termination_penalty <= 0:
            raise ValueError("termination_penalty must be <= 0")
        if self.penetration_margin < 0:
            raise ValueError("penetration_margin must be >= 0")
        if self.actuator_lag_tau is not None and not self.actuator_lag_tau > 0:
            raise ValueError("actuator_lag_tau must be positive or null")
        if self.reward_variant not in VARIANTS:
            raise ValueError(f"reward_variant must be one of {VARIANTS}, got {self.reward_variant!r}")


@dataclass(frozen=True)
class EnvState:
    joints: JointState
    target: CartesianPoint
    last_command: tuple = (0.0, 0.0, 0.0, 0.0)
    step_count: int = 0
    filtered_velocity: tuple = (0.0, 0.0, 0.0, 0.0)


class StepResult(NamedTuple):
    next_state: EnvState
    observation: np.ndarray
    reward: RewardBreakdown
    terminated: bool
    truncated: bool
    penalty: float = 0.0

    @property
    def training_reward(self) -> float:
        return self.reward.r_total + self.penalty


def sample_target(rng: np.random.Generator, config: EnvConfig, geom: ExcavatorGeometry) -> CartesianPoint:
    """Uniform target in the configured box, resampled until reachable."""
    for _ in range(MAX_TARGET_ATTEMPTS):
        p = CartesianPoint(
            float(rng.uniform(*config.target_x)),
            float(rng.uniform(*config.target_y)),
            float(rng.uniform(*config.target_z)),
        )
        if is_reachable(geom, p):
            return p
    raise TargetSamplingError(
        f"no reachable target in x={config.target_x}, y={config.target_y}, "
        f"z={config.target_z} after {MAX_TARGET_ATTEMPTS} draws"
    )


class ExcavatorEnv:
    """Stateless stepping: every method maps an ``EnvState`` to a new one."""

    def __init__(self, config: EnvConfig = EnvConfig(), geom: ExcavatorGeometry = ExcavatorGeometry()):
        self.config = config
        self.geom = geom
        self._vel = np.asarray(geom.vel_limits, dtype=np.float64)

    def observe(self, state: EnvState) -> np.ndarray:
        _, tip = forward_kinematics(self.geom, state.joints)
        return np.array((*tip, *state.target, *state.last_command), dtype=np.float64)

    def reset(self, rng: Optional[np.random.Generator] = None, target=None):
        if target is None:
            if rng is None:
                raise ValueError("reset needs an rng or a fixed target")
            target = sample_target(rng, self.config, self.geom)
        state = EnvState(joints=HOME_POSE, target=CartesianPoint(*map(float, target)))
        return state, self.observe(state)

    def with_target(self, state: EnvState, target) -> EnvState:
        return replace(state, target=CartesianPoint(*map(float, target)))

    def reward(self, joints: JointState, p_bm_arm, p_bkt, target) -> RewardBreakdown:
        if self.config.reward_variant == "euclidean":
            return euclidean_breakdown(p_bkt, target)
        return independent_reward(self.geom, joints, p_bm_arm, p_bkt, target, self.config.weights)

    def check_termination(self, state: EnvState) -> bool:
        _, tip = forward_kinematics(self.geom, state.joints)
        return tip.z < self.config.ground_z - self.config.penetration_margin

    def step(self, state: EnvState, action) -> StepResult:
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (ACT_DIM,):
            raise ValueError(f"action must have shape ({ACT_DIM},), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite action {a.tolist()}")
        a = np.clip(a, -1.0, 1.0)
        v_cmd = a * self._vel
        tau = self.config.actuator_lag_tau
        if tau is None:
            v = v_cmd
        else:
            v_prev = np.asarray(state.filtered_velocity)
            v = v_prev + (self.config.dt / tau) * (v_cmd - v_prev)
        joints = integrate(self.geom, state.joints, v, self.config.dt)
        nxt = EnvState(
            joints=joints,
            target=state.target,
            last_command=tuple(float(x) for x in a),
            step_count=state.step_count + 1,
            filtered_velocity=tuple(float(x) for x in v) if tau is not None else state.filtered_velocity,
        )
        p_arm, tip = forward_kinematics(self.geom, joints)
        rew = self.reward(joints, p_arm, tip, nxt.target)
        terminated = tip.z < self.config.ground_z - self.config.penetration_margin
        truncated = (not terminated) and nxt.step_count >= self.config.episode_len
        obs = np.array((*tip, *nxt.target, *nxt.last_command), dtype=np.float64)
        penalty = self.config.termination_penalty if terminated else 0.0
        return StepResult(nxt, obs, rew, terminated, truncated, penalty)


def check_termination(state: EnvState, config: EnvConfig, geom: ExcavatorGeometry = ExcavatorGeometry()) -> bool:
    return ExcavatorEnv(config, geom).check_termination(state)

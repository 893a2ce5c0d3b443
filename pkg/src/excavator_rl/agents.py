"""TD3 and DDPG on top of :mod:`excavator_rl.neuralnet`.

The training loop is single threaded and draws every random number from
named generators, so a run is a pure function of its configuration and seed.
"""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .environment import ACT_DIM, OBS_DIM, EnvConfig, ExcavatorEnv
from .kinematics import ExcavatorGeometry
from .neuralnet import (
    AdamState,
    MlpParams,
    MlpSpec,
    adam_step,
    backward,
    forward,
    init_mlp,
    polyak_update,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("td3", "ddpg")


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the sub-stream ``name`` of master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])))


@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    target_noise_sigma: float = 0.2
    target_noise_clip: float = 0.5
    exploration_sigma: float = 0.5
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 5000
    lr_actor: float = 1e-5
    lr_critic: float = 1e-5
    episodes: int = 20000
    actor_hidden: tuple = (180, 180, 180)
    critic1_hidden: tuple = (180, 180, 180)
    critic2_hidden: tuple = (64, 180, 180)
    obs_pad: int = OBS_DIM
    dtype: str = "float32"

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if int(self.policy_delay) != self.policy_delay or self.policy_delay < 1:
            raise ValueError(f"policy_delay must be an integer >= 1, got {self.policy_delay}")
        for name in ("target_noise_sigma", "target_noise_clip", "exploration_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("batch_size", "buffer_capacity"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {getattr(self, name)}")
        if self.warmup_steps < 0 or self.episodes < 0:
            raise ValueError("warmup_steps and episodes must be >= 0")
        if self.lr_actor < 0 or self.lr_critic < 0:
            raise ValueError("learning rates must be >= 0")
        if self.obs_pad < OBS_DIM:
            raise ValueError(f"obs_pad must be >= {OBS_DIM}, got {self.obs_pad}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        for name in ("actor_hidden", "critic1_hidden", "critic2_hidden"):
            object.__setattr__(self, name, tuple(int(w) for w in getattr(self, name)))


class Transition:
    __slots__ = ("s", "a", "r", "s_next", "done")

    def __init__(self, s, a, r, s_next, done):
        self.s, self.a, self.r, self.s_next, self.done = s, a, r, s_next, done


class Batch:
    __slots__ = ("s", "a", "r", "s_next", "done")

    def __init__(self, s, a, r, s_next, done):
        self.s, self.a, self.r, self.s_next, self.done = s, a, r, s_next, done

    def __len__(self):
        return len(self.r)


class ReplayBuffer:
    """FIFO ring buffer with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM, dtype=np.float32):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, obs_dim), dtype=dtype)
        self.a = np.zeros((self.capacity, act_dim), dtype=dtype)
        self.r = np.zeros(self.capacity, dtype=dtype)
        self.s_next = np.zeros((self.capacity, obs_dim), dtype=dtype)
        self.done = np.zeros(self.capacity, dtype=dtype)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, done) -> None:
        i = self.cursor
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push(self, t: Transition) -> None:
        self.add(t.s, t.a, t.r, t.s_next, t.done)

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx])

    def ordered(self) -> dict:
        """Stored transitions oldest first (for persistence)."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self.cursor) % self.capacity
        return {k: getattr(self, k)[order] for k in ("s", "a", "r", "s_next", "done")}

    def state_dict(self) -> dict:
        d = {k: getattr(self, k)[: self.size] for k in ("s", "a", "r", "s_next", "done")}
        d.update(cursor=np.array(self.cursor), size=np.array(self.size), capacity=np.array(self.capacity))
        return d

    @classmethod
    def from_state_dict(cls, d) -> "ReplayBuffer":
        buf = cls(int(d["capacity"]), d["s"].shape[1], d["a"].shape[1], d["s"].dtype)
        n = int(d["size"])
        for k in ("s", "a", "r", "s_next", "done"):
            getattr(buf, k)[:n] = d[k]
        buf.size, buf.cursor = n, int(d["cursor"])
        return buf


@dataclass
class Agent:
    """Online and target networks plus optimizer state.

    ``critics`` holds two networks for TD3 and one for DDPG.
    """

    algorithm: str
    actor_spec: MlpSpec
    critic_specs: List[MlpSpec]
    actor: MlpParams
    critics: List[MlpParams]
    actor_target: MlpParams
    critic_targets: List[MlpParams]
    actor_adam: AdamState
    critic_adams: List[AdamState]
    obs_pad: int = OBS_DIM

    def all_nets(self) -> dict:
        nets = {"actor": self.actor, "actor_target": self.actor_target}
        for i, (c, t) in enumerate(zip(self.critics, self.critic_targets), start=1):
            nets[f"critic{i}"] = c
            nets[f"critic{i}_target"] = t
        return nets


def make_agent(algorithm: str, cfg: Td3Config, rng: np.random.Generator) -> Agent:
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    dtype = np.dtype(cfg.dtype)
    n_in = cfg.obs_pad
    actor_spec = MlpSpec((n_in, *cfg.actor_hidden, ACT_DIM), "tanh")
    hidden = [cfg.critic1_hidden] if algorithm == "ddpg" else [cfg.critic1_hidden, cfg.critic2_hidden]
    critic_specs = [MlpSpec((n_in + ACT_DIM, *h, 1), "identity") for h in hidden]
    actor = init_mlp(actor_spec, rng, dtype)
    critics = [init_mlp(s, rng, dtype) for s in critic_specs]
    return Agent(
        algorithm=algorithm,
        actor_spec=actor_spec,
        critic_specs=critic_specs,
        actor=actor,
        critics=critics,
        actor_target=actor.copy(),
        critic_targets=[c.copy() for c in critics],
        actor_adam=AdamState.zeros(actor),
        critic_adams=[AdamState.zeros(c) for c in critics],
        obs_pad=cfg.obs_pad,
    )


def pad_obs(s: np.ndarray, width: int) -> np.ndarray:
    if s.shape[-1] == width:
        return s
    pad = [(0, 0)] * (s.ndim - 1) + [(0, width - s.shape[-1])]
    return np.pad(s, pad)


def policy(actor: MlpParams, spec: MlpSpec, s) -> np.ndarray:
    out, _ = forward(actor, spec, pad_obs(np.asarray(s), spec.n_in))
    return out


def select_action(actor: MlpParams, spec: MlpSpec, s, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """``clip(pi(s) + N(0, sigma^2 I), -1, 1)``; no draw is made when ``sigma == 0``."""
    a = policy(actor, spec, s).astype(np.float64)
    if sigma > 0:
        a = a + rng.normal(0.0, sigma, size=a.shape)
    return np.clip(a, -1.0, 1.0)


def _q(params: MlpParams, spec: MlpSpec, s, a) -> np.ndarray:
    out, _ = forward(params, spec, np.concatenate([s, a], axis=-1))
    return out[..., 0]


def td3_target(agent: Agent, batch: Batch, cfg: Td3Config, rng: np.random.Generator) -> np.ndarray:
    """Clipped double-Q target with target-policy smoothing."""
    s2 = pad_obs(batch.s_next, agent.obs_pad)
    a2, _ = forward(agent.actor_target, agent.actor_spec, s2)
    noise = rng.normal(0.0, cfg.target_noise_sigma, size=a2.shape) if cfg.target_noise_sigma > 0 else 0.0
    noise = np.clip(noise, -cfg.target_noise_clip, cfg.target_noise_clip)
    a2 = np.clip(a2 + noise, -1.0, 1.0).astype(a2.dtype)
    qs = [_q(t, spec, s2, a2) for t, spec in zip(agent.critic_targets, agent.critic_specs)]
    q_min = qs[0] if len(qs) == 1 else np.minimum(qs[0], qs[1])
    return batch.r + (1.0 - batch.done) * cfg.gamma * q_min


def ddpg_target(agent: Agent, batch: Batch, cfg: Td3Config) -> np.ndarray:
    s2 = pad_obs(batch.s_next, agent.obs_pad)
    a2, _ = forward(agent.actor_target, agent.actor_spec, s2)
    q = _q(agent.critic_targets[0], agent.critic_specs[0], s2, a2)
    return batch.r + (1.0 - batch.done) * cfg.gamma * q


def critic_update(agent: Agent, batch: Batch, y: np.ndarray, lr: float) -> List[float]:
    """One Adam step per critic on ``mean((Q(s, a) - y)^2)``; returns the pre-step losses."""
    sa = np.concatenate([pad_obs(batch.s, agent.obs_pad), batch.a], axis=-1)
    n = len(y)
    losses = []
    for params, spec, adam in zip(agent.critics, agent.critic_specs, agent.critic_adams):
        q, cache = forward(params, spec, sa)
        diff = q[:, 0] - y
        loss = float(np.mean(diff * diff))
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite critic loss {loss}")
        grads, _ = backward(params, spec, cache, (2.0 / n) * diff[:, None])
        adam_step(params, grads, adam, lr)
        losses.append(loss)
    return losses


def actor_update(agent: Agent, batch: Batch, lr: float) -> float:
    """One Adam step on ``-mean(Q1(s, pi(s)))``; critic parameters are only read."""
    s = pad_obs(batch.s, agent.obs_pad)
    a, a_cache = forward(agent.actor, agent.actor_spec, s)
    critic, cspec = agent.critics[0], agent.critic_specs[0]
    q, q_cache = forward(critic, cspec, np.concatenate([s, a], axis=-1))
    loss = -float(np.mean(q))
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite actor loss {loss}")
    n = len(q)
    _, g_in = backward(critic, cspec, q_cache, np.full_like(q, -1.0 / n), need_param_grads=False)
    grads, _ = backward(agent.actor, agent.actor_spec, a_cache, g_in[:, s.shape[1]:])
    adam_step(agent.actor, grads, agent.actor_adam, lr)
    return loss


def _soft_update_all(agent: Agent, tau: float) -> None:
    polyak_update(agent.actor_target, agent.actor, tau)
    for t, c in zip(agent.critic_targets, agent.critics):
        polyak_update(t, c, tau)


def td3_train_step(agent: Agent, buffer: ReplayBuffer, cfg: Td3Config, rng: np.random.Generator,
                   global_step: int) -> dict:
    batch = buffer.sample(rng, cfg.batch_size)
    y = td3_target(agent, batch, cfg, rng)
    losses = critic_update(agent, batch, y, cfg.lr_critic)
    actor_loss = None
    if global_step % cfg.policy_delay == 0:
        actor_loss = actor_update(agent, batch, cfg.lr_actor)
        _soft_update_all(agent, cfg.tau)
    return {"critic_loss": float(np.mean(losses)), "actor_loss": actor_loss}


def ddpg_train_step(agent: Agent, buffer: ReplayBuffer, cfg: Td3Config, rng: np.random.Generator,
                    global_step: int = 0) -> dict:
    batch = buffer.sample(rng, cfg.batch_size)
    y = ddpg_target(agent, batch, cfg)
    (loss,) = critic_update(agent, batch, y, cfg.lr_critic)
    actor_loss = actor_update(agent, batch, cfg.lr_actor)
    _soft_update_all(agent, cfg.tau)
    return {"critic_loss": loss, "actor_loss": actor_loss}


# -- training loop ---------------------------------------------------------


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    steps: int
    terminated: bool
    critic_loss: float  # mean over the episode's updates, nan when none ran
    actor_loss: float


LOG_COLUMNS = ("episode", "return", "steps", "terminated", "critic_loss", "actor_loss")


@dataclass
class TrainerState:
    """Everything needed to continue a run bit-exactly."""

    algorithm: str
    agent: Agent
    buffer: ReplayBuffer
    env_rng: np.random.Generator
    agent_rng: np.random.Generator
    global_step: int = 0
    update_step: int = 0
    episode: int = 0
    log: List[EpisodeRecord] = field(default_factory=list)


class TrainingError(RuntimeError):
    pass


def init_trainer(algorithm: str, cfg: Td3Config, seed: int) -> TrainerState:
    agent = make_agent(algorithm, cfg, named_rng(seed, "init"))
    buffer = ReplayBuffer(cfg.buffer_capacity, cfg.obs_pad, ACT_DIM, np.dtype(cfg.dtype))
    return TrainerState(algorithm, agent, buffer, named_rng(seed, "env"), named_rng(seed, "agent"))


def run_episode(ts: TrainerState, env: ExcavatorEnv, cfg: Td3Config) -> EpisodeRecord:
    agent, buf, rng = ts.agent, ts.buffer, ts.agent_rng
    train_step = td3_train_step if ts.algorithm == "td3" else ddpg_train_step
    state, obs = env.reset(ts.env_rng)
    obs_p = pad_obs(obs, agent.obs_pad)
    ret, critic_losses, actor_losses = 0.0, [], []
    terminated = False
    steps = 0
    while True:
        if ts.global_step < cfg.warmup_steps:
            a = rng.uniform(-1.0, 1.0, size=ACT_DIM)
        else:
            a = select_action(agent.actor, agent.actor_spec, obs_p, cfg.exploration_sigma, rng)
        res = env.step(state, a)
        nxt_p = pad_obs(res.observation, agent.obs_pad)
        r = res.training_reward
        buf.add(obs_p, a, r, nxt_p, res.terminated)
        ret += r
        steps += 1
        ts.global_step += 1
        if ts.global_step >= cfg.warmup_steps and len(buf) >= cfg.batch_size:
            try:
                out = train_step(agent, buf, cfg, rng, ts.update_step)
            except FloatingPointError as exc:
                raise TrainingError(
                    f"episode {ts.episode}, env step {ts.global_step}, update {ts.update_step}: {exc}"
                ) from exc
            ts.update_step += 1
            critic_losses.append(out["critic_loss"])
            if out["actor_loss"] is not None:
                actor_losses.append(out["actor_loss"])
        state, obs_p = res.next_state, nxt_p
        if res.terminated or res.truncated:
            terminated = res.terminated
            break
    rec = EpisodeRecord(
        ts.episode,
        ret,
        steps,
        terminated,
        float(np.mean(critic_losses)) if critic_losses else math.nan,
        float(np.mean(actor_losses)) if actor_losses else math.nan,
    )
    ts.log.append(rec)
    ts.episode += 1
    return rec


def train(
    env_config: EnvConfig,
    cfg: Td3Config,
    seed: int,
    algorithm: str = "td3",
    geom: ExcavatorGeometry = ExcavatorGeometry(),
    state: Optional[TrainerState] = None,
    on_episode: Optional[Callable[[TrainerState, EpisodeRecord], None]] = None,
    stop_after: Optional[int] = None,
) -> TrainerState:
    """Run episodes until ``cfg.episodes`` are logged (or ``stop_after`` more).

    Pass a restored ``state`` to resume; ``on_episode`` is called after each
    episode (checkpointing, progress output).
    """
    ts = state if state is not None else init_trainer(algorithm, cfg, seed)
    env = ExcavatorEnv(env_config, geom)
    end = cfg.episodes if stop_after is None else min(cfg.episodes, ts.episode + stop_after)
    while ts.episode < end:
        rec = run_episode(ts, env, cfg)
        if on_episode is not None:
            on_episode(ts, rec)
        if rec.episode % 50 == 0:
            log.info("episode %d return %.1f steps %d", rec.episode, rec.ret, rec.steps)
    return ts


def config_dict(cfg: Td3Config) -> dict:
    d = asdict(cfg)
    for k in ("actor_hidden", "critic1_hidden", "critic2_hidden"):
        d[k] = list(d[k])
    return d

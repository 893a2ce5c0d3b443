"""Versioned checkpoints: a JSON document plus a binary replay-buffer sidecar.

The JSON holds the run configuration, every network and optimizer state as
nested number lists, the generator states, counters and the training log.
The replay buffer (up to a million transitions) lives next to it as a
``.npy`` structured array, referenced by name and SHA-256.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from . import config as config_mod
from .agents import EpisodeRecord, ReplayBuffer, TrainerState, make_agent
from .neuralnet import AdamState, MlpParams

FORMAT = "excavator-rl-checkpoint"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _gen_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _restore_gen(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


def _num(x: float):
    # JSON has no nan; losses are nan for episodes without updates
    return None if isinstance(x, float) and math.isnan(x) else x


def _log_to_json(log):
    return [[r.episode, r.ret, r.steps, r.terminated, _num(r.critic_loss), _num(r.actor_loss)] for r in log]


def _log_from_json(rows):
    nan = lambda v: math.nan if v is None else float(v)
    return [EpisodeRecord(int(e), float(ret), int(st), bool(term), nan(c), nan(a))
            for e, ret, st, term, c, a in rows]


def _buffer_bytes(buf: ReplayBuffer) -> bytes:
    dt = np.dtype([
        ("s", buf.s.dtype, buf.s.shape[1]),
        ("a", buf.a.dtype, buf.a.shape[1]),
        ("r", buf.r.dtype),
        ("s_next", buf.s_next.dtype, buf.s_next.shape[1]),
        ("done", buf.done.dtype),
    ])
    rec = np.empty(buf.size, dtype=dt)
    for k in ("s", "a", "r", "s_next", "done"):
        rec[k] = getattr(buf, k)[: buf.size]
    out = io.BytesIO()
    np.save(out, rec, allow_pickle=False)
    return out.getvalue()


def _buffer_from_bytes(data: bytes, capacity: int, cursor: int) -> ReplayBuffer:
    rec = np.load(io.BytesIO(data), allow_pickle=False)
    s_dim, a_dim = rec.dtype["s"].shape[0], rec.dtype["a"].shape[0]
    buf = ReplayBuffer(capacity, s_dim, a_dim, rec.dtype["r"])
    n = rec.shape[0]
    for k in ("s", "a", "r", "s_next", "done"):
        getattr(buf, k)[:n] = rec[k]
    buf.size, buf.cursor = n, cursor
    return buf


def checkpoint_document(ts: TrainerState, cfg) -> dict:
    agent = ts.agent
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": config_mod.to_dict(cfg),
        "algorithm": ts.algorithm,
        "global_step": ts.global_step,
        "update_step": ts.update_step,
        "episode": ts.episode,
        "rng": {"env": _gen_state(ts.env_rng), "agent": _gen_state(ts.agent_rng)},
        "networks": {name: p.to_lists() for name, p in agent.all_nets().items()},
        "adam": {
            "actor": agent.actor_adam.to_lists(),
            **{f"critic{i}": a.to_lists() for i, a in enumerate(agent.critic_adams, start=1)},
        },
        "buffer": {"capacity": ts.buffer.capacity, "cursor": ts.buffer.cursor, "size": ts.buffer.size},
        "log": _log_to_json(ts.log),
    }


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def buffer_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".buffer.npy")


def save_checkpoint(ts: TrainerState, cfg, path, with_buffer: bool = True) -> Path:
    """Write ``path`` (JSON) and, unless disabled, the buffer sidecar."""
    path = Path(path)
    doc = checkpoint_document(ts, cfg)
    if with_buffer:
        data = _buffer_bytes(ts.buffer)
        bpath = buffer_path(path)
        _atomic_write(bpath, data)
        doc["buffer"].update(file=bpath.name, sha256=hashlib.sha256(data).hexdigest())
    _atomic_write(path, (json.dumps(doc, separators=(",", ":")) + "\n").encode())
    return path


def read_document(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint (line {exc.lineno}: {exc.msg})") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not an excavator-rl checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {doc.get('version')} != supported {VERSION}")
    return doc


def load_checkpoint(path, need_buffer: bool = True):
    """Return ``(TrainerState, RunConfig)``.

    With ``need_buffer=False`` the replay buffer comes back empty, which is
    all evaluation needs.
    """
    path = Path(path)
    doc = read_document(path)
    try:
        cfg = config_mod.from_dict(doc["config"])
        algorithm = doc["algorithm"]
        # build a template agent for the shapes, then overwrite every array
        agent = make_agent(algorithm, cfg.agent, np.random.default_rng(0))
        nets = agent.all_nets()
        if set(nets) != set(doc["networks"]):
            raise CheckpointError(f"{path}: network set {sorted(doc['networks'])} does not match {algorithm}")
        for name, params in nets.items():
            loaded = MlpParams.from_lists(doc["networks"][name])
            if loaded.flat.shape != params.flat.shape:
                raise CheckpointError(f"{path}: network {name} has the wrong shape")
            params.flat[...] = loaded.flat
        agent.actor_adam = AdamState.from_lists(doc["adam"]["actor"])
        agent.critic_adams = [AdamState.from_lists(doc["adam"][f"critic{i}"])
                              for i in range(1, len(agent.critics) + 1)]
        binfo = doc["buffer"]
        if need_buffer:
            if "file" not in binfo:
                raise CheckpointError(f"{path}: checkpoint was saved without its replay buffer")
            bpath = path.with_name(binfo["file"])
            try:
                data = bpath.read_bytes()
            except OSError as exc:
                raise CheckpointError(f"{path}: missing replay buffer {bpath.name}: {exc}") from exc
            if hashlib.sha256(data).hexdigest() != binfo["sha256"]:
                raise CheckpointError(f"{bpath}: replay buffer is corrupt (checksum mismatch)")
            buffer = _buffer_from_bytes(data, int(binfo["capacity"]), int(binfo["cursor"]))
        else:
            buffer = ReplayBuffer(1, agent.obs_pad)
        ts = TrainerState(
            algorithm=algorithm,
            agent=agent,
            buffer=buffer,
            env_rng=_restore_gen(doc["rng"]["env"]),
            agent_rng=_restore_gen(doc["rng"]["agent"]),
            global_step=int(doc["global_step"]),
            update_step=int(doc["update_step"]),
            episode=int(doc["episode"]),
            log=_log_from_json(doc["log"]),
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({type(exc).__name__}: {exc})") from exc
    return ts, cfg


def load_actor(path):
    """``(actor_params, actor_spec, RunConfig, algorithm)`` without touching the buffer."""
    ts, cfg = load_checkpoint(path, need_buffer=False)
    return ts.agent.actor, ts.agent.actor_spec, cfg, ts.algorithm


def log_csv(log) -> str:
    lines = ["episode,return,steps,terminated,critic_loss,actor_loss"]
    for r in log:
        lines.append(f"{r.episode},{r.ret!r},{r.steps},{int(r.terminated)},{r.critic_loss!r},{r.actor_loss!r}")
    return "\n".join(lines) + "\n"


def read_log_csv(path) -> list:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "episode,return,steps,terminated,critic_loss,actor_loss":
            raise ValueError(f"{path}: not a training log")
        for line in fh:
            e, ret, st, term, c, a = line.strip().split(",")
            rows.append(EpisodeRecord(int(e), float(ret), int(st), term == "1", float(c), float(a)))
    return rows


"""Desk-scale training runs behind the acceptance suite.

Every run goes through the real command line (``python -m excavator_rl
train``) in a subprocess and lands in a cache directory keyed by the run
configuration and a hash of the modules that determine training numerics.
A run already present in the cache is reused; an interrupted one resumes
from its last periodic checkpoint (resume is bit-exact).

Populate the cache ahead of time (it takes many hours on one core)::

    python tests/acceptance_support.py            # all runs, in order
    python tests/acceptance_support.py --status   # what is cached
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import subprocess
import sys
import time
from pathlib import Path

from excavator_rl import config as config_mod
from excavator_rl.agents import Td3Config
from excavator_rl.checkpoint import load_actor
from excavator_rl.environment import EnvConfig, ExcavatorEnv
from excavator_rl.evaluation import run_eval_episode, run_result
from excavator_rl.trajectory import default_spec, generate

REPO = Path(__file__).resolve().parents[1]
PKG = REPO / "src" / "excavator_rl"
CACHE_ROOT = Path(os.environ.get("EXCAVATOR_RL_ACCEPT_CACHE", REPO / ".acceptance_cache"))

EPISODES = 3000
EPISODE_LEN = 512
SEEDS = (0, 1, 2)
SNAPSHOT_EVERY = 500
RESUME_AT = 1500

# method key -> (algorithm, reward variant)
METHODS = {
    "td3-independent": ("td3", "independent"),
    "td3-euclidean": ("td3", "euclidean"),
    "ddpg-independent": ("ddpg", "independent"),
}

# modules whose code decides what a training run produces
TRAINING_SOURCES = ("kinematics.py", "reward.py", "environment.py", "neuralnet.py",
                    "agents.py", "config.py", "checkpoint.py")


def run_config(algorithm: str, variant: str, seed: int) -> config_mod.RunConfig:
    return config_mod.RunConfig(
        seed=seed,
        algorithm=algorithm,
        reward_variant=variant,
        env=EnvConfig(episode_len=EPISODE_LEN),
        agent=Td3Config(episodes=EPISODES),
    )


def source_hash() -> str:
    h = hashlib.sha256()
    for name in TRAINING_SOURCES:
        h.update(name.encode())
        h.update((PKG / name).read_bytes())
    return h.hexdigest()[:12]


def cache_dir() -> Path:
    return CACHE_ROOT / f"src-{source_hash()}"


def run_dir(method: str, seed: int) -> Path:
    return cache_dir() / f"{method}-s{seed}"


def resume_dir() -> Path:
    return cache_dir() / "td3-independent-s0-resumed"


def _cli(*args, log_file: Path) -> None:
    cmd = [sys.executable, "-m", "excavator_rl", *map(str, args)]
    env = dict(os.environ, PYTHONPATH=str(PKG.parent) + os.pathsep + os.environ.get("PYTHONPATH", ""))
    with open(log_file, "a") as fh:
        fh.write(f"$ {' '.join(cmd)}\n")
        fh.flush()
        proc = subprocess.run(cmd, stdout=fh, stderr=subprocess.STDOUT, env=env)
    if proc.returncode != 0:
        raise RuntimeError(f"{' '.join(cmd)} failed (exit {proc.returncode}); see {log_file}")


def _is_done(d: Path) -> bool:
    return (d / "DONE").exists()


def _mark_done(d: Path, started: float) -> None:
    (d / "DONE").write_text(json.dumps({"seconds": round(time.time() - started, 1)}) + "\n")


def _train(d: Path, cfg: config_mod.RunConfig, *extra) -> None:
    """Fresh training into ``d``, or resume from its periodic checkpoint."""
    d.mkdir(parents=True, exist_ok=True)
    cfg_path = d / "run_config.json"
    cfg_path.write_text(config_mod.dumps(cfg))
    ck = d / "checkpoint.json"
    if ck.exists():
        _cli("train", "--resume", ck, "--out", d, "--episodes", cfg.agent.episodes, *extra, log_file=d / "cli.log")
    else:
        _cli("train", "--config", cfg_path, "--out", d, *extra, log_file=d / "cli.log")


def ensure_run(method: str, seed: int) -> Path:
    d = run_dir(method, seed)
    if not _is_done(d):
        started = time.time()
        _train(d, run_config(*METHODS[method], seed), "--snapshot-every", SNAPSHOT_EVERY)
        _mark_done(d, started)
    return d


def ensure_resume_run() -> Path:
    """Seed-0 TD3 run split in two processes with a checkpoint file in between."""
    d = resume_dir()
    if not _is_done(d):
        started = time.time()
        cfg = run_config("td3", "independent", 0)
        first = d / "first-half"
        if not _is_done(first):
            _train(first, cfg.replace(agent=dataclasses.replace(cfg.agent, episodes=RESUME_AT)))
            _mark_done(first, started)
        final = d / "final"
        final.mkdir(parents=True, exist_ok=True)
        src = final / "checkpoint.json" if (final / "checkpoint.json").exists() else first / "checkpoint.json"
        _cli("train", "--resume", src, "--out", final, "--episodes", EPISODES, log_file=d / "cli.log")
        _mark_done(d, started)
    return d


def evaluate(ckpt: Path, task: str, level: int = 0):
    """``RunResult`` of a frozen policy on a default trajectory."""
    actor, spec, cfg, algorithm = load_actor(ckpt)
    traj = generate(default_spec(task, level, cfg.eval.level_offsets, cfg.eval.n_points), cfg.geometry)
    rows = run_eval_episode(actor, spec, ExcavatorEnv(cfg.env_config(), cfg.geometry), traj, cfg.eval.schedule)
    return run_result(algorithm, cfg.reward_variant, task, level, cfg.seed, rows)


def policies(d: Path) -> list:
    """Periodic weight snapshots of a run followed by its final checkpoint."""
    return sorted((d / "snapshots").glob("ep*.json")) + [d / "checkpoint.json"]


def plan():
    for method in METHODS:
        for seed in SEEDS:
            yield f"{method}-s{seed}", lambda m=method, s=seed: ensure_run(m, s)
    yield "td3-independent-s0-resumed", ensure_resume_run


def status() -> list:
    rows = []
    for method in METHODS:
        for seed in SEEDS:
            d = run_dir(method, seed)
            rows.append((d.name, _is_done(d), _progress(d)))
    d = resume_dir()
    rows.append((d.name, _is_done(d), _progress(d / "final") or _progress(d / "first-half")))
    return rows


def _progress(d: Path) -> int:
    log = d / "train_log.csv"
    if not log.exists():
        return 0
    return max(0, len(log.read_text().splitlines()) - 1)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="populate the acceptance-run cache")
    ap.add_argument("--status", action="store_true")
    args = ap.parse_args(argv)
    print(f"cache: {cache_dir()}")
    if args.status:
        for name, done, n in status():
            print(f"  {name:32s} {'done' if done else f'{n}/{EPISODES} episodes'}")
        return 0
    for name, job in plan():
        t = time.time()
        print(f"[{time.strftime('%H:%M:%S')}] {name} ...", flush=True)
        job()
        print(f"[{time.strftime('%H:%M:%S')}] {name} ready ({time.time() - t:.0f} s)", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``excavator-rl <command> ...``.

Set ``EXCAVATOR_RL_LOG`` (DEBUG, INFO, WARNING, ...) for log verbosity.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_mod
from . import config as config_mod
from .agents import TrainingError, make_agent, train
from .environment import ExcavatorEnv
from .kinematics import is_reachable
from .evaluation import (
    build_report,
    read_trace,
    render_table,
    report_csv,
    run_eval_episode,
    run_result,
    write_trace,
)
from .neuralnet import MlpSpec, gradient_check
from .plots import export_plot
from .trajectory import (
    TrajectorySpec,
    UnreachableWaypointError,
    default_spec,
    generate,
    read_csv,
    write_csv,
)

log = logging.getLogger("excavator_rl")

GRADCHECK_TOL = 1e-4


class CliError(Exception):
    pass


def _load_cfg(path):
    if path is None:
        return config_mod.RunConfig()
    try:
        return config_mod.load_config(path)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc


def cmd_train(args) -> int:
    if args.resume:
        ts, cfg = ckpt_mod.load_checkpoint(args.resume)
        if args.episodes is not None:
            cfg = cfg.replace(agent=dataclasses.replace(cfg.agent, episodes=args.episodes))
    else:
        cfg = _load_cfg(args.config)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.algorithm:
            changes["algorithm"] = args.algorithm
        if args.reward_variant:
            changes["reward_variant"] = args.reward_variant
        if args.episodes is not None:
            changes["agent"] = dataclasses.replace(cfg.agent, episodes=args.episodes)
        if args.episode_len is not None:
            changes["env"] = dataclasses.replace(cfg.env, episode_len=args.episode_len)
        cfg = cfg.replace(**changes)
        ts = None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config_mod.dumps(cfg))
    log_path, ck_path = out / "train_log.csv", out / "checkpoint.json"

    snap_every = args.snapshot_every
    if snap_every:
        (out / "snapshots").mkdir(exist_ok=True)

    def on_episode(state, rec):
        done = rec.episode + 1
        if done % cfg.checkpoint_every == 0:
            ckpt_mod.save_checkpoint(state, cfg, ck_path)
            log_path.write_text(ckpt_mod.log_csv(state.log))
        if snap_every and done % snap_every == 0:
            # weights only; enough for eval, not for resuming
            ckpt_mod.save_checkpoint(state, cfg, out / "snapshots" / f"ep{done:06d}.json", with_buffer=False)

    try:
        ts = train(cfg.env_config(), cfg.agent, cfg.seed, cfg.algorithm, cfg.geometry,
                   state=ts, on_episode=on_episode)
    except TrainingError as exc:
        raise CliError(f"training aborted: {exc}") from exc
    ckpt_mod.save_checkpoint(ts, cfg, ck_path)
    log_path.write_text(ckpt_mod.log_csv(ts.log))
    print(f"trained {len(ts.log)} episodes ({ts.global_step} steps); log {log_path}, checkpoint {ck_path}")
    return 0


def _trajectory(args, cfg):
    if getattr(args, "traj", None):
        traj = read_csv(args.traj)
        for i, p in enumerate(traj.waypoints):
            if not is_reachable(cfg.geometry, p):
                raise CliError(f"{args.traj}: waypoint {i} {tuple(p)} is not reachable")
        return traj
    spec = default_spec(args.task, args.level, cfg.eval.level_offsets, cfg.eval.n_points)
    try:
        return generate(spec, cfg.geometry)
    except UnreachableWaypointError as exc:
        raise CliError(f"{args.task} Lv{args.level}: {exc}") from exc


def cmd_eval(args) -> int:
    if args.ckpt:
        actor, spec, cfg, algorithm = ckpt_mod.load_actor(args.ckpt)
    else:
        # fresh, untrained actor: useful for smoke runs
        cfg = _load_cfg(args.config)
        algorithm = cfg.algorithm
        agent = make_agent(algorithm, cfg.agent, np.random.default_rng(cfg.seed))
        actor, spec = agent.actor, agent.actor_spec
    traj = _trajectory(args, cfg)
    env = ExcavatorEnv(cfg.env_config(), cfg.geometry)
    rows = run_eval_episode(actor, spec, env, traj, cfg.eval.schedule)
    trace = Path(args.trace)
    trace.parent.mkdir(parents=True, exist_ok=True)
    write_trace(rows, trace)
    res = run_result(algorithm, cfg.reward_variant, args.task, args.level, cfg.seed, rows)
    meta = {"kind": "eval-summary", "trace": trace.name, **res.__dict__}
    trace.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    if args.plot:
        export_plot(rows, args.plot, title=f"{args.task} Lv{args.level}")
    print(f"{args.task} Lv{args.level}: mu_err {res.mu_err:.2f} cm, max_err {res.max_err:.2f} cm, "
          f"rmse {res.rmse:.2f} cm over {res.n_steps} steps")
    return 0


def collect_runs(directory):
    runs = []
    for meta_path in sorted(Path(directory).rglob("*.json")):
        try:
            meta = json.loads(meta_path.read_text())
        except (json.JSONDecodeError, UnicodeDecodeError):
            continue
        if not isinstance(meta, dict) or meta.get("kind") != "eval-summary":
            continue
        rows = read_trace(meta_path.with_name(meta["trace"]))
        runs.append(run_result(meta["method"], meta["variant"], meta["task"], meta["level"], meta["seed"], rows))
    return runs


def cmd_report(args) -> int:
    runs = collect_runs(args.indir)
    if not runs:
        raise CliError(f"no evaluation summaries found under {args.indir}")
    rows = build_report(runs)
    out = Path(args.out)
    out.write_text(report_csv(rows))
    table = render_table(rows)
    out.with_suffix(".txt").write_text(table)
    print(table, end="")
    return 0


def cmd_plot(args) -> int:
    if args.trace:
        data = read_trace(args.trace)
    else:
        data = ckpt_mod.read_log_csv(args.log)
    export_plot(data, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_cfg(args.config)
    agent = make_agent("td3", cfg.agent, np.random.default_rng(0))
    specs = {"actor": agent.actor_spec, "critic1": agent.critic_specs[0], "critic2": agent.critic_specs[1]}
    if args.small:
        specs["small-tanh"] = MlpSpec((5, 7, 6, 3), "tanh")
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for name, spec in specs.items():
        r = gradient_check(spec, rng)
        worst = max(worst, r["max_rel_err"])
        status = "ok" if r["max_rel_err"] < GRADCHECK_TOL else "FAIL"
        print(f"{name:12s} widths={spec.widths} head={spec.output_activation:8s} "
              f"max_rel_err={r['max_rel_err']:.2e} checked={r['checked']} kinks={r['skipped_kinks']} {status}")
    if worst >= GRADCHECK_TOL:
        raise CliError(f"gradient check failed: max relative error {worst:.2e} >= {GRADCHECK_TOL:g}")
    return 0


def _parse_traj_spec(text: str, cfg) -> TrajectorySpec:
    p = Path(text)
    if p.exists():
        try:
            d = json.loads(p.read_text())
            return TrajectorySpec(d["kind"], tuple(d["start"]), tuple(d["end"]), int(d.get("n_points", 16)),
                                  int(d.get("level", 0)), float(d.get("grade", 0.0)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{p}: bad trajectory spec: {exc}") from exc
    kind, _, level = text.partition(":")
    try:
        return default_spec(kind, int(level or 0), cfg.eval.level_offsets, cfg.eval.n_points)
    except ValueError as exc:
        raise CliError(f"bad trajectory spec {text!r}: {exc}") from exc


def cmd_gen_traj(args) -> int:
    cfg = _load_cfg(args.config)
    spec = _parse_traj_spec(args.spec, cfg)
    try:
        traj = generate(spec, cfg.geometry)
    except UnreachableWaypointError as exc:
        raise CliError(str(exc)) from exc
    write_csv(traj, args.out)
    print(f"wrote {len(traj)} waypoints to {args.out}")
    return 0


def cmd_config(args) -> int:
    cfg = _load_cfg(args.config) if args.config else config_mod.RunConfig()
    sys.stdout.write(config_mod.dumps(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="excavator-rl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a TD3/DDPG agent")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="continue from a checkpoint.json")
    p.add_argument("--algorithm", choices=("td3", "ddpg"))
    p.add_argument("--reward-variant", choices=("independent", "euclidean"))
    p.add_argument("--episodes", type=int)
    p.add_argument("--episode-len", type=int)
    p.add_argument("--snapshot-every", type=int, default=0, metavar="N",
                   help="also keep a weights-only snapshot every N episodes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="track a reference trajectory with a frozen policy")
    p.add_argument("--ckpt", help="checkpoint to evaluate (omit for an untrained actor)")
    p.add_argument("--config", help="config for an untrained actor")
    p.add_argument("--task", choices=("linear", "slope"), default="linear")
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--traj", help="custom trajectory CSV (idx,x,y,z)")
    p.add_argument("--trace", required=True)
    p.add_argument("--plot", help="also write an SVG of the tracked path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate evaluation traces into an accuracy table")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plot", help="SVG of a trace or a training log")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--trace")
    g.add_argument("--log")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("gradcheck", help="finite-difference check of the network gradients")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--small", action="store_true", help="also check a tiny tanh network")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-traj", help="write a reference trajectory CSV")
    p.add_argument("--spec", required=True, help="JSON spec file, or KIND[:LEVEL] such as slope:1")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_traj)

    p = sub.add_parser("config", help="print the effective configuration")
    p.add_argument("--print-defaults", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_config)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("EXCAVATOR_RL_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, config_mod.ConfigError, ckpt_mod.CheckpointError, OSError, ValueError) as exc:
        print(f"excavator-rl {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

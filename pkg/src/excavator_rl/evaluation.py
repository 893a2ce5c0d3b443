"""Frozen-policy trajectory tracking: traces, error metrics and report tables."""
from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, fields
from typing import Iterable, List, NamedTuple, Sequence

import numpy as np

from .agents import policy
from .environment import ExcavatorEnv
from .kinematics import forward_kinematics
from .neuralnet import MlpParams, MlpSpec
from .trajectory import Trajectory, WaypointSchedule, waypoint_at


class TraceRow(NamedTuple):
    step: int
    time: float
    target_x: float
    target_y: float
    target_z: float
    tip_x: float
    tip_y: float
    tip_z: float
    arm_x: float
    arm_y: float
    arm_z: float
    theta_swg: float
    theta_bm: float
    theta_arm: float
    theta_bkt: float
    a1: float
    a2: float
    a3: float
    a4: float
    d_swg: float
    d_bm_arm: float
    d_bkt: float
    r_swg: float
    r_bm_arm: float
    r_bkt: float
    r_total: float
    err: float


TRACE_COLUMNS = TraceRow._fields


def run_eval_episode(
    actor: MlpParams,
    actor_spec: MlpSpec,
    env: ExcavatorEnv,
    traj: Trajectory,
    schedule: WaypointSchedule = WaypointSchedule(),
) -> List[TraceRow]:
    """Noise-free rollout from the home pose, one row per control step.

    Row ``t`` holds the target that was active while action ``t`` was chosen
    and the machine state right after that action.  Ground contact is logged
    through the positions but does not stop the rollout.
    """
    if actor_spec.n_in < 10:
        raise ValueError("actor input is narrower than the observation")
    state, _ = env.reset(target=traj.waypoints[0])
    horizon = schedule.horizon(traj)
    rows: List[TraceRow] = []
    wp_idx, since_advance = 0, 0
    for t in range(horizon):
        if schedule.mode == "fixed":
            target = waypoint_at(traj, t, schedule.steps_per_waypoint)
        else:
            target = traj.waypoints[wp_idx]
        state = env.with_target(state, target)
        a = np.clip(policy(actor, actor_spec, env.observe(state)).astype(np.float64), -1.0, 1.0)
        res = env.step(state, a)
        state = res.next_state
        arm, tip = forward_kinematics(env.geom, state.joints)
        err = math.dist(target, tip)
        rows.append(TraceRow(
            t, (t + 1) * env.config.dt, *target, *tip, *arm, *state.joints, *a, *res.reward, err,
        ))
        since_advance += 1
        if (schedule.mode == "tolerance" and since_advance >= schedule.min_steps
                and err < schedule.tolerance and wp_idx < len(traj) - 1):
            wp_idx += 1
            since_advance = 0
    return rows


def compute_errors(trace) -> tuple:
    """``(mu_err, max_err, rmse)`` in centimetres.

    Accepts trace rows or a plain sequence of per-step errors in metres.
    """
    e = np.array([r.err if isinstance(r, TraceRow) else float(r) for r in trace], dtype=np.float64)
    if e.size == 0:
        raise ValueError("cannot compute errors of an empty trace")
    return 100.0 * float(np.mean(e)), 100.0 * float(np.max(e)), 100.0 * math.sqrt(float(np.mean(e * e)))


def write_trace(rows: Sequence[TraceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in rows:
            w.writerow([r.step] + [repr(float(v)) for v in r[1:]])


def read_trace(path) -> List[TraceRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: not a trace file (unexpected header)")
        for rec in reader:
            vals = [int(rec[0])] + [float(v) for v in rec[1:]]
            rows.append(TraceRow(*vals))
    return rows


# -- reports ---------------------------------------------------------------

VARIANT_SHORT = {"euclidean": "Euc", "independent": "Ind"}


@dataclass(frozen=True)
class RunResult:
    method: str  # td3 | ddpg
    variant: str  # independent | euclidean
    task: str  # linear | slope
    level: int
    seed: str
    mu_err: float
    max_err: float
    rmse: float
    n_steps: int

    @property
    def column(self) -> str:
        return f"{self.method.upper()}-{VARIANT_SHORT.get(self.variant, self.variant)}"


REPORT_COLUMNS = tuple(f.name for f in fields(RunResult))


def run_result(method, variant, task, level, seed, trace) -> RunResult:
    mu, mx, rmse = compute_errors(trace)
    return RunResult(method, variant, task, int(level), str(seed), mu, mx, rmse, len(trace))


def build_report(runs: Iterable[RunResult]) -> List[RunResult]:
    """One row per (method, variant, task, level); seeds merged by median.

    Rows are sorted by task, level, method, variant.  The merged ``seed``
    field lists the contributing seeds separated by ``;``.
    """
    groups: dict = {}
    for r in runs:
        groups.setdefault((r.task, r.level, r.method, r.variant), []).append(r)
    out = []
    for key in sorted(groups):
        g = groups[key]
        if len(g) == 1:
            out.append(g[0])
            continue
        out.append(RunResult(
            g[0].method, g[0].variant, g[0].task, g[0].level,
            ";".join(r.seed for r in g),
            statistics.median(r.mu_err for r in g),
            statistics.median(r.max_err for r in g),
            statistics.median(r.rmse for r in g),
            sum(r.n_steps for r in g),
        ))
    return out


def report_csv(rows: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                    for v in (getattr(r, c) for c in REPORT_COLUMNS)])
    return buf.getvalue()


def parse_report_csv(text: str) -> List[RunResult]:
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != REPORT_COLUMNS:
        raise ValueError(f"unexpected report header {header}")
    rows = []
    for rec in reader:
        d = dict(zip(header, rec))
        rows.append(RunResult(
            d["method"], d["variant"], d["task"], int(d["level"]), d["seed"],
            float(d["mu_err"]), float(d["max_err"]), float(d["rmse"]), int(d["n_steps"]),
        ))
    return rows


def render_table(rows: Sequence[RunResult]) -> str:
    """Text table: one column per method/reward variant, mu/max rows per task and level."""
    order = {"DDPG-Ind": 0, "DDPG-Euc": 1, "TD3-Euc": 2, "TD3-Ind": 3}
    cols = sorted({r.column for r in rows}, key=lambda c: (order.get(c, 9), c))
    cell = {(r.task, r.level, r.column): r for r in rows}
    tasks = sorted({(r.task, r.level) for r in rows})
    head = ["task", "metric"] + cols
    body = []
    for task, level in tasks:
        label = f"{task.capitalize()} Lv{level}"
        for metric, attr in (("mu_err (cm)", "mu_err"), ("max_err (cm)", "max_err"), ("rmse (cm)", "rmse")):
            line = [label, metric]
            for c in cols:
                r = cell.get((task, level, c))
                line.append(f"{getattr(r, attr):.2f}" if r else "-")
            body.append(line)
            label = ""
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    fmt = lambda line: "  ".join(str(x).ljust(w) for x, w in zip(line, widths)).rstrip()
    sep = "-" * len(fmt(head))
    return "\n".join([fmt(head), sep, *map(fmt, body)]) + "\n"

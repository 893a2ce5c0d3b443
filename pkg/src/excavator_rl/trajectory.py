"""Reference paths for point chasing: straight level passes and inclined passes."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .kinematics import CartesianPoint, ExcavatorGeometry, is_reachable

KINDS = ("linear", "slope")
DEFAULT_LEVEL_OFFSETS = (0.0, 0.2, 0.4, 0.6)
DEFAULT_START = (4.0, -1.5, -0.4)
DEFAULT_END_XY = (4.0, 1.5)
DEFAULT_GRADE = math.radians(15.0)
DEFAULT_N_POINTS = 16


class UnreachableWaypointError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str
    start: CartesianPoint
    end: CartesianPoint
    n_points: int = DEFAULT_N_POINTS
    level: int = 0
    grade: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        object.__setattr__(self, "start", CartesianPoint(*map(float, self.start)))
        object.__setattr__(self, "end", CartesianPoint(*map(float, self.end)))
        rise = self.end.z - self.start.z
        run = math.hypot(self.end.x - self.start.x, self.end.y - self.start.y)
        if self.kind == "linear" and rise != 0.0:
            raise ValueError("linear trajectory needs start.z == end.z")
        if self.kind == "slope" and not math.isclose(rise, math.tan(self.grade) * run, abs_tol=1e-9):
            raise ValueError(
                f"slope rise {rise} inconsistent with grade {self.grade} over run {run}"
            )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "start": list(self.start),
            "end": list(self.end),
            "n_points": self.n_points,
            "level": self.level,
            "grade": self.grade,
        }


@dataclass(frozen=True)
class Trajectory:
    waypoints: tuple
    spec: Optional[TrajectorySpec] = None

    def __len__(self):
        return len(self.waypoints)

    def as_array(self) -> np.ndarray:
        return np.array(self.waypoints, dtype=np.float64)


def slope_spec(start, end_xy, grade: float, n_points: int = DEFAULT_N_POINTS, level: int = 0) -> TrajectorySpec:
    """Build a slope spec from its start, horizontal end point and grade."""
    run = math.hypot(end_xy[0] - start[0], end_xy[1] - start[1])
    end = (end_xy[0], end_xy[1], start[2] + math.tan(grade) * run)
    return TrajectorySpec("slope", start, end, n_points, level, grade)


def default_spec(kind: str, level: int = 0, level_offsets=DEFAULT_LEVEL_OFFSETS,
                 n_points: int = DEFAULT_N_POINTS) -> TrajectorySpec:
    if not 0 <= level < len(level_offsets):
        raise ValueError(f"level {level} outside the {len(level_offsets)} configured levels")
    z0 = DEFAULT_START[2] + level_offsets[level]
    start = (DEFAULT_START[0], DEFAULT_START[1], z0)
    if kind == "linear":
        return TrajectorySpec("linear", start, (*DEFAULT_END_XY, z0), n_points, level, 0.0)
    if kind == "slope":
        return slope_spec(start, DEFAULT_END_XY, DEFAULT_GRADE, n_points, level)
    raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


def _interpolate(spec: TrajectorySpec, geom: Optional[ExcavatorGeometry]) -> Trajectory:
    s = np.asarray(spec.start)
    e = np.asarray(spec.end)
    n = spec.n_points
    pts = []
    for i in range(n):
        t = i / (n - 1)
        p = s + t * (e - s)
        if i == n - 1:
            p = e
        pts.append(CartesianPoint(*map(float, p)))
    if geom is not None:
        for i, p in enumerate(pts):
            if not is_reachable(geom, p):
                raise UnreachableWaypointError(f"waypoint {i} {tuple(p)} is not reachable")
    return Trajectory(tuple(pts), spec)


def gen_linear(spec: TrajectorySpec, geom: Optional[ExcavatorGeometry] = None) -> Trajectory:
    """Equally spaced points on a level segment; reach is checked when ``geom`` is given."""
    if spec.kind != "linear":
        raise ValueError(f"gen_linear needs a linear spec, got {spec.kind!r}")
    return _interpolate(spec, geom)


def gen_slope(spec: TrajectorySpec, geom: Optional[ExcavatorGeometry] = None) -> Trajectory:
    if spec.kind != "slope":
        raise ValueError(f"gen_slope needs a slope spec, got {spec.kind!r}")
    return _interpolate(spec, geom)


def generate(spec: TrajectorySpec, geom: Optional[ExcavatorGeometry] = None) -> Trajectory:
    return gen_linear(spec, geom) if spec.kind == "linear" else gen_slope(spec, geom)


def waypoint_at(traj: Trajectory, step: int, steps_per_waypoint: int) -> CartesianPoint:
    if steps_per_waypoint < 1:
        raise ValueError("steps_per_waypoint must be >= 1")
    return traj.waypoints[min(step // steps_per_waypoint, len(traj.waypoints) - 1)]


@dataclass(frozen=True)
class WaypointSchedule:
    """Fixed-rate advance by default; ``mode="tolerance"`` advances once the tip
    is within ``tolerance`` metres (never earlier than ``min_steps``)."""

    steps_per_waypoint: int = 40
    mode: str = "fixed"
    tolerance: float = 0.05
    min_steps: int = 1

    def __post_init__(self):
        if self.steps_per_waypoint < 1:
            raise ValueError("steps_per_waypoint must be >= 1")
        if self.mode not in ("fixed", "tolerance"):
            raise ValueError(f"schedule mode must be 'fixed' or 'tolerance', got {self.mode!r}")

    def horizon(self, traj: Trajectory) -> int:
        return len(traj) * self.steps_per_waypoint


def write_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["idx", "x", "y", "z"])
        for i, p in enumerate(traj.waypoints):
            w.writerow([i, repr(p.x), repr(p.y), repr(p.z)])


def read_csv(path) -> Trajectory:
    pts: List[CartesianPoint] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["idx", "x", "y", "z"]:
            raise ValueError(f"{path}: expected columns idx,x,y,z, got {reader.fieldnames}")
        for row in reader:
            if int(row["idx"]) != len(pts):
                raise ValueError(f"{path}: waypoint indices must run 0..n-1")
            pts.append(CartesianPoint(float(row["x"]), float(row["y"]), float(row["z"])))
    if len(pts) < 2:
        raise ValueError(f"{path}: a trajectory needs at least two waypoints")
    return Trajectory(tuple(pts), None)

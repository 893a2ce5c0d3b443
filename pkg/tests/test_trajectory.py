import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from excavator_rl.kinematics import ExcavatorGeometry, is_reachable
from excavator_rl.trajectory import (
    DEFAULT_LEVEL_OFFSETS,
    DEFAULT_START,
    TrajectorySpec,
    UnreachableWaypointError,
    WaypointSchedule,
    default_spec,
    gen_linear,
    gen_slope,
    generate,
    read_csv,
    slope_spec,
    waypoint_at,
    write_csv,
)

GEOM = ExcavatorGeometry()


def test_linear_midpoint():
    t = gen_linear(TrajectorySpec("linear", (0, 3, 0), (0, 5, 0), 3))
    assert [tuple(p) for p in t.waypoints] == [(0, 3, 0), (0, 4, 0), (0, 5, 0)]
    t = gen_linear(TrajectorySpec("linear", (0, 3, 0), (0, 5, 0), 2))
    assert [tuple(p) for p in t.waypoints] == [(0, 3, 0), (0, 5, 0)]


def test_slope_forty_five_degrees():
    spec = slope_spec((0, 3, 0), (0, 5), math.pi / 4, 3)
    t = gen_slope(spec)
    np.testing.assert_allclose(t.as_array(), [(0, 3, 0), (0, 4, 1), (0, 5, 2)], atol=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        TrajectorySpec("linear", (0, 3, 0), (0, 5, 1))
    with pytest.raises(ValueError):
        TrajectorySpec("slope", (0, 3, 0), (0, 5, 0), grade=0.3)
    with pytest.raises(ValueError):
        TrajectorySpec("circle", (0, 3, 0), (0, 5, 0))
    with pytest.raises(ValueError):
        TrajectorySpec("linear", (0, 3, 0), (0, 5, 0), 1)


def test_unreachable_waypoint_named():
    spec = TrajectorySpec("linear", (0, 3, 0), (0, 12, 0), 4)
    with pytest.raises(UnreachableWaypointError, match="waypoint 0"):
        generate(spec, GEOM)


@pytest.mark.parametrize("kind", ["linear", "slope"])
@pytest.mark.parametrize("level", range(len(DEFAULT_LEVEL_OFFSETS)))
def test_default_trajectories_reachable(kind, level):
    t = generate(default_spec(kind, level), GEOM)
    assert len(t) == 16
    assert all(is_reachable(GEOM, p) for p in t.waypoints)
    assert t.waypoints[0].z == pytest.approx(DEFAULT_START[2] + DEFAULT_LEVEL_OFFSETS[level])


@settings(max_examples=100, deadline=None)
@given(st.tuples(*[st.floats(-10, 10)] * 3), st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
       st.floats(-1.2, 1.2), st.integers(2, 40))
def test_equal_spacing(start, end_xy, grade, n):
    spec = slope_spec(start, end_xy, grade, n)
    pts = gen_slope(spec).as_array()
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    np.testing.assert_allclose(steps, steps[0], atol=1e-9)
    np.testing.assert_array_equal(pts[0], spec.start)
    np.testing.assert_array_equal(pts[-1], spec.end)


def test_waypoint_at():
    t = gen_linear(TrajectorySpec("linear", (0, 3, 0), (0, 5, 0), 3))
    assert waypoint_at(t, 0, 10) == t.waypoints[0]
    assert waypoint_at(t, 10_000, 10) == t.waypoints[-1]
    assert [waypoint_at(t, k, 1) for k in range(3)] == list(t.waypoints)
    idx = [t.waypoints.index(waypoint_at(t, k, 7)) for k in range(40)]
    assert idx == sorted(idx)
    with pytest.raises(ValueError):
        waypoint_at(t, 0, 0)


def test_schedule():
    t = generate(default_spec("linear", 0))
    assert WaypointSchedule().horizon(t) == 16 * 40
    with pytest.raises(ValueError):
        WaypointSchedule(mode="sometimes")


def test_csv_round_trip(tmp_path):
    t = generate(default_spec("slope", 2))
    write_csv(t, tmp_path / "t.csv")
    back = read_csv(tmp_path / "t.csv")
    assert back.waypoints == t.waypoints
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(tmp_path / "bad.csv")

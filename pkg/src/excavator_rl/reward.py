"""Per-joint (independent) reward and the single-distance baseline.

Each joint group chases its own sub-target:

* swing: the heading of the bucket target about the swing axis;
* boom + arm: the arm tip should sit ``l_bkt`` above the target, at the
  target's horizontal distance, in the *current* swing plane;
* bucket: the bucket tip should hang ``l_bkt`` straight below the *actual*
  arm tip, i.e. the bucket link should be vertical.

All three distances go through the same shaping curve, which peaks at 3 for
a zero distance and falls off quadratically beyond 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .kinematics import CartesianPoint, ExcavatorGeometry, JointState, wrap_angle

VARIANTS = ("independent", "euclidean")


class DegenerateTargetError(ValueError):
    """Target lies on the swing axis, so its heading is undefined."""


@dataclass(frozen=True)
class RewardWeights:
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        for name in ("c1", "c2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"reward weight {name} must be finite and >= 0, got {v!r}")


class RewardBreakdown(NamedTuple):
    d_swg: float
    d_bm_arm: float
    d_bkt: float
    r_swg: float
    r_bm_arm: float
    r_bkt: float
    r_total: float


def target_swing_angle(target: CartesianPoint) -> float:
    if target[0] == 0.0 and target[1] == 0.0:
        raise DegenerateTargetError(
            f"target {tuple(target)} is on the swing axis; heading is undefined"
        )
    return math.atan2(target[0], target[1])


def arm_subtarget(target: CartesianPoint, theta_swg: float, l_bkt: float) -> CartesianPoint:
    l_xy = math.hypot(target[0], target[1])
    return CartesianPoint(
        l_xy * math.sin(theta_swg), l_xy * math.cos(theta_swg), target[2] + l_bkt
    )


def bucket_subtarget(p_bm_arm: CartesianPoint, l_bkt: float) -> CartesianPoint:
    return CartesianPoint(p_bm_arm[0], p_bm_arm[1], p_bm_arm[2] - l_bkt)


def partial_reward(d: float) -> float:
    if d > 1.0:
        return -(d * d)
    return 4.0 * (d - 1.0) ** 2 - 1.0


def _dist(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def independent_reward(
    geom: ExcavatorGeometry,
    joints: JointState,
    p_bm_arm: CartesianPoint,
    p_bkt: CartesianPoint,
    target: CartesianPoint,
    weights: RewardWeights = RewardWeights(),
) -> RewardBreakdown:
    d_swg = abs(wrap_angle(target_swing_angle(target) - joints.theta_swg))
    d_bm_arm = _dist(arm_subtarget(target, joints.theta_swg, geom.l_bkt), p_bm_arm)
    d_bkt = _dist(bucket_subtarget(p_bm_arm, geom.l_bkt), p_bkt)
    r_swg = partial_reward(d_swg)
    r_bm_arm = partial_reward(d_bm_arm)
    r_bkt = partial_reward(d_bkt)
    r_total = weights.c1 * r_swg + weights.c2 * r_bm_arm + r_bkt
    return RewardBreakdown(d_swg, d_bm_arm, d_bkt, r_swg, r_bm_arm, r_bkt, r_total)


def euclidean_reward(p_bkt: CartesianPoint, target: CartesianPoint) -> float:
    return partial_reward(_dist(target, p_bkt))


def euclidean_breakdown(p_bkt: CartesianPoint, target: CartesianPoint) -> RewardBreakdown:
    """Baseline reward packed into a breakdown; only the total is meaningful.

    The single distance is reported in the ``d_bkt`` slot; the other
    components are zero.
    """
    d = _dist(target, p_bkt)
    r = partial_reward(d)
    return RewardBreakdown(0.0, 0.0, d, 0.0, 0.0, r, r)

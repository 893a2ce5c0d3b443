"""Forward kinematics and joint integration for the swing/boom/arm/bucket chain.

World frame: boom pivot at the origin, +z up.  At zero swing the boom plane
points along +y; swinging by ``theta`` maps a planar reach ``r`` to
``(r sin theta, r cos theta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

JOINT_NAMES = ("swing", "boom", "arm", "bucket")


class JointState(NamedTuple):
    theta_swg: float
    theta_bm: float
    theta_arm: float
    theta_bkt: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)


class CartesianPoint(NamedTuple):
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)


def _default_limits():
    # swing entry is informational only: swing is wrapped, never clamped
    return ((-math.pi, math.pi), (-0.6, 1.1), (-2.6, -0.4), (-2.8, 0.2))


@dataclass(frozen=True)
class ExcavatorGeometry:
    """Link lengths (m), joint limits (rad) and joint speed limits (rad/s)."""

    l_bm: float = 5.7
    l_arm: float = 2.9
    l_bkt: float = 1.5
    joint_limits: tuple = field(default_factory=_default_limits)
    vel_limits: tuple = (0.5, 0.5, 0.5, 0.5)

    def __post_init__(self):
        for name in ("l_bm", "l_arm", "l_bkt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive length, got {v!r}")
        limits = tuple(tuple(float(x) for x in lim) for lim in self.joint_limits)
        vels = tuple(float(v) for v in self.vel_limits)
        if len(limits) != 4 or any(len(lim) != 2 for lim in limits):
            raise ValueError("joint_limits needs one [min, max] pair per joint")
        for name, (lo, hi) in zip(JOINT_NAMES, limits):
            if not lo < hi:
                raise ValueError(f"joint_limits[{name}]: min {lo} must be < max {hi}")
        if len(vels) != 4 or any(not (v > 0 and math.isfinite(v)) for v in vels):
            raise ValueError("vel_limits needs four strictly positive values")
        object.__setattr__(self, "joint_limits", limits)
        object.__setattr__(self, "vel_limits", vels)

    @property
    def max_reach(self) -> float:
        return self.l_bm + self.l_arm + self.l_bkt

    def to_dict(self) -> dict:
        return {
            "l_bm": self.l_bm,
            "l_arm": self.l_arm,
            "l_bkt": self.l_bkt,
            "joint_limits": [list(lim) for lim in self.joint_limits],
            "vel_limits": list(self.vel_limits),
        }


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


def planar_reach(geom: ExcavatorGeometry, joints: JointState):
    """In-plane positions of the arm tip and bucket tip.

    Returns ``(r_arm, z_arm, r_bkt, z_bkt)`` where ``r`` is the horizontal
    distance from the swing axis.
    """
    phi1 = joints.theta_bm
    phi2 = phi1 + joints.theta_arm
    phi3 = phi2 + joints.theta_bkt
    r_arm = geom.l_bm * math.cos(phi1) + geom.l_arm * math.cos(phi2)
    z_arm = geom.l_bm * math.sin(phi1) + geom.l_arm * math.sin(phi2)
    r_bkt = r_arm + geom.l_bkt * math.cos(phi3)
    z_bkt = z_arm + geom.l_bkt * math.sin(phi3)
    return r_arm, z_arm, r_bkt, z_bkt


def forward_kinematics(geom: ExcavatorGeometry, joints: JointState):
    """World positions ``(p_bm_arm, p_bkt)`` of the arm tip and bucket tip."""
    r_arm, z_arm, r_bkt, z_bkt = planar_reach(geom, joints)
    s, c = math.sin(joints.theta_swg), math.cos(joints.theta_swg)
    return (
        CartesianPoint(r_arm * s, r_arm * c, z_arm),
        CartesianPoint(r_bkt * s, r_bkt * c, z_bkt),
    )


def integrate(geom: ExcavatorGeometry, joints: JointState, velocities, dt: float) -> JointState:
    """One explicit Euler step with saturated speeds and clamped joint limits."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    out = []
    for i, (theta, v) in enumerate(zip(joints, velocities)):
        vmax = geom.vel_limits[i]
        v = min(max(float(v), -vmax), vmax)
        theta = theta + v * dt
        if i == 0:
            theta = wrap_angle(theta)
        else:
            lo, hi = geom.joint_limits[i]
            theta = min(max(theta, lo), hi)
        out.append(theta)
    return JointState(*out)


def vertical_bucket_ik(geom: ExcavatorGeometry, target, elbow: int = -1):
    """Joint angles placing the bucket tip on ``target`` with a vertical bucket.

    Closed-form two-link solve for the boom and arm (the arm tip must sit
    ``l_bkt`` above the target); the bucket angle then makes the bucket link
    point straight down.  ``elbow`` selects the arm branch (-1 folds the arm
    under the boom, the usual excavator posture).  Returns ``None`` when the
    solution violates a joint limit or the point is out of reach.
    """
    x, y, z = (float(v) for v in target)
    r = math.hypot(x, y)
    za = z + geom.l_bkt
    d2 = r * r + za * za
    c2 = (d2 - geom.l_bm**2 - geom.l_arm**2) / (2.0 * geom.l_bm * geom.l_arm)
    if not -1.0 <= c2 <= 1.0:
        return None
    th_arm = elbow * math.acos(c2)
    th_bm = math.atan2(za, r) - math.atan2(
        geom.l_arm * math.sin(th_arm), geom.l_bm + geom.l_arm * math.cos(th_arm)
    )
    th_bkt = -0.5 * math.pi - (th_bm + th_arm)
    th_swg = math.atan2(x, y) if r > 0 else 0.0
    joints = JointState(th_swg, th_bm, th_arm, th_bkt)
    for i in (1, 2, 3):
        lo, hi = geom.joint_limits[i]
        if not lo <= joints[i] <= hi:
            return None
    return joints


def is_reachable(geom: ExcavatorGeometry, target) -> bool:
    """Whether ``target`` can be met with a vertical bucket inside the joint limits."""
    if target[0] == 0.0 and target[1] == 0.0:
        return False
    return vertical_bucket_ik(geom, target) is not None

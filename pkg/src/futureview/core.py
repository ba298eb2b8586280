"""Planar robot state, velocity commands, and unicycle kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Twist:
    """Velocity command of a nonholonomic robot: linear v [m/s], angular w [rad/s]."""

    v: float
    w: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.w)):
            raise ValueError(f"non-finite twist ({self.v}, {self.w})")

    def clamped(self, v_max: float, w_max: float) -> "Twist":
        return Twist(
            min(max(self.v, -v_max), v_max),
            min(max(self.w, -w_max), w_max),
        )


ZERO_TWIST = Twist(0.0, 0.0)


@dataclass(frozen=True)
class Pose:
    """Planar pose (x, y in meters, theta in radians, wrapped to (-pi, pi])."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.theta)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y}, {self.theta})")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


def integrate_pose(pose: Pose, twist: Twist, dt: float) -> Pose:
    """Advance a pose by driving with a constant twist for dt seconds.

    Exact arc integration: the robot follows a circular arc of radius v/w.
    Near-zero angular velocity (|w| < 1e-9) degenerates to straight-line
    motion.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    v, w = twist.v, twist.w
    if abs(w) < 1e-9:
        return Pose(
            pose.x + v * dt * math.cos(pose.theta),
            pose.y + v * dt * math.sin(pose.theta),
            pose.theta,
        )
    theta1 = pose.theta + w * dt
    r = v / w
    return Pose(
        pose.x + r * (math.sin(theta1) - math.sin(pose.theta)),
        pose.y - r * (math.cos(theta1) - math.cos(pose.theta)),
        theta1,
    )

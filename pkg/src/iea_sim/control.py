"""Lookahead waypoint targeting and the heading controller.

The plan is a coarse waypoint list linearly interpolated into a finer
path; at each control step the target is the first path point at least
lookahead_m ahead of the current position. The controller is a
proportional heading law followed by saturation and a first-order
exponential output filter (y_k = alpha * u_k + (1 - alpha) * y_{k-1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .dynamics import DbwCommand
from .geometry import Pose2D, wrap_angle


@dataclass(frozen=True)
class WaypointPlan:
    waypoints: tuple[tuple[float, float], ...]
    interp_spacing: float = 1.0
    lookahead_m: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "waypoints",
                           tuple((float(x), float(y)) for x, y in self.waypoints))
        if len(self.waypoints) < 2:
            raise ValueError("plan needs at least two waypoints")
        if self.interp_spacing <= 0 or self.lookahead_m <= 0:
            raise ValueError("interp_spacing and lookahead_m must be positive")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if math.dist(a, b) < 1e-12:
                raise ValueError("consecutive waypoints must not coincide")


@dataclass(frozen=True)
class ControllerParams:
    kp: float = 1.0          # [1/s]
    u_max: float = 0.5       # yaw-rate saturation [rad/s]
    alpha: float = 0.2       # output filter weight
    v_cruise: float = 3.0    # [m/s]

    def __post_init__(self):
        if self.kp <= 0 or self.u_max <= 0 or self.v_cruise <= 0:
            raise ValueError("kp, u_max, v_cruise must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")


@dataclass(frozen=True)
class ControllerState:
    y_prev: float = 0.0
    target_index: int = 0
    path_complete: bool = False
    reissued: bool = False


def interpolate_path(plan: WaypointPlan) -> list[tuple[float, float]]:
    """Subdivide each segment at spacing <= interp_spacing, keeping all waypoints."""
    path: list[tuple[float, float]] = [plan.waypoints[0]]
    for (x0, y0), (x1, y1) in zip(plan.waypoints, plan.waypoints[1:]):
        n = max(1, math.ceil(math.dist((x0, y0), (x1, y1)) / plan.interp_spacing))
        for i in range(1, n + 1):
            f = i / n
            path.append((x0 + f * (x1 - x0), y0 + f * (y1 - y0)))
    return path


def select_target(path: list[tuple[float, float]], cstate: ControllerState,
                  pose: Pose2D, lookahead_m: float
                  ) -> tuple[tuple[float, float], ControllerState]:
    """First path point at least lookahead_m ahead of the pose, never regressing.

    The index first advances (forward only) to the remaining path point
    nearest the pose, then on to the first point at least lookahead_m
    away; this keeps points behind the vehicle from being re-targeted.
    When even the final point is closer than the lookahead, returns the
    final point with path_complete set.
    """
    if not path:
        raise ValueError("empty path")
    here = (pose.x, pose.y)
    start = cstate.target_index
    i = min(range(start, len(path)), key=lambda k: math.dist(path[k], here))
    while i < len(path) - 1 and math.dist(path[i], here) < lookahead_m:
        i += 1
    complete = i == len(path) - 1 and math.dist(path[i], here) < lookahead_m
    return path[i], replace(cstate, target_index=i,
                            path_complete=cstate.path_complete or complete)


def filter_step(y_prev: float, u_new: float, alpha: float) -> float:
    """First-order exponential smoothing; small alpha weights history."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    return alpha * u_new + (1.0 - alpha) * y_prev


def heading_control(pose: Pose2D, target: tuple[float, float],
                    params: ControllerParams, cstate: ControllerState
                    ) -> tuple[DbwCommand, ControllerState]:
    """Proportional heading law -> saturation -> output filter.

    A target coincident with the pose position reissues the previous
    filtered command and flags the state.
    """
    dx, dy = target[0] - pose.x, target[1] - pose.y
    if math.hypot(dx, dy) < 1e-12:
        return (DbwCommand(params.v_cruise, cstate.y_prev),
                replace(cstate, reissued=True))
    e = wrap_angle(math.atan2(dy, dx) - pose.psi)
    u_sat = min(max(params.kp * e, -params.u_max), params.u_max)
    y = filter_step(cstate.y_prev, u_sat, params.alpha)
    return (DbwCommand(params.v_cruise, y),
            replace(cstate, y_prev=y, reissued=False))

"""Reference routes: the lane-following nominal route and speed profiles.

A Route wraps a geometric path with a per-pose reference speed. The
profile cruises at the scenario speed, tapers with comfortable
deceleration into route ends and cusps, and, when an intersection stop
is still owed, drops to zero at the hold point and stays zero beyond
it. The controller treats the hold point as the temporary end of the
route until the stop is discharged, at which point the profile is
rebuilt without the wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry
from .astar import ReferencePath, resample
from .grid import FORWARD
from .vehicle import VehicleState
from .world import EGO_DIRECTION, LaneSegment, Scenario, ScenarioError


@dataclass
class Route:
    """A trackable reference: dense poses, signed speed per pose."""

    path: ReferencePath
    v_ref: np.ndarray  # (N,) signed by travel direction
    end_s: float  # arclength of the active end (stop wall or full length)
    stop_s: Optional[float] = None  # hold point, None once discharged

    def __len__(self) -> int:
        return len(self.path)

    @property
    def length(self) -> float:
        return self.path.length


def ego_lane(scenario: Scenario, x: float, y: float) -> LaneSegment:
    """The ego-direction lane nearest to a point."""
    best, best_d = None, math.inf
    pt = np.array([[x, y]])
    for lane in scenario.lanes:
        if lane.direction != EGO_DIRECTION:
            continue
        _, _, dist = geometry.project_to_polyline(pt, lane.centerline)
        if dist[0] < best_d:
            best, best_d = lane, float(dist[0])
    if best is None:
        raise ScenarioError("scenario has no ego-direction lane")
    return best


def clip_polyline(line: np.ndarray, s_from: float, s_to: float) -> np.ndarray:
    """Sub-polyline between two arclengths, original vertices kept."""
    s = geometry.polyline_arclengths(line)
    s_from = max(0.0, min(s_from, s[-1]))
    s_to = max(s_from, min(s_to, s[-1]))
    x = np.interp([s_from, s_to], s, line[:, 0])
    y = np.interp([s_from, s_to], s, line[:, 1])
    inner = (s > s_from + 1e-9) & (s < s_to - 1e-9)
    pts = [np.array([x[0], y[0]])]
    pts.extend(line[inner])
    pts.append(np.array([x[1], y[1]]))
    return np.array(pts)


def _polyline_path(points: np.ndarray) -> ReferencePath:
    seg = np.diff(points, axis=0)
    heading = np.arctan2(seg[:, 1], seg[:, 0])
    heading = np.append(heading, heading[-1])
    poses = np.column_stack([points, heading])
    return ReferencePath(
        poses=poses,
        directions=np.full(points.shape[0], FORWARD, dtype=int),
        cumulative_s=geometry.polyline_arclengths(points),
    )


def speed_profile(
    path: ReferencePath,
    cruise: float,
    decel: float,
    v0: float = 0.0,
    stop_s: Optional[float] = None,
) -> np.ndarray:
    """Signed reference speed per pose.

    Tapers at sqrt(2 * decel * gap) into every cusp and the route end;
    ramps out of cusps the same way (from |v0| at the route start). With
    stop_s set, the profile also tapers to zero there and is zero for
    every pose at or beyond it.
    """
    s = path.cumulative_s
    n = len(path)
    v = np.full(n, abs(cruise))
    bounds = [0] + list(path.cusp_indices()) + [n - 1]
    bounds = sorted(set(bounds))
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg = slice(a, b + 1)
        launch = abs(v0) if a == 0 else 0.0
        ramp_out = np.sqrt(launch * launch + 2.0 * decel * (s[seg] - s[a]))
        ramp_in = np.sqrt(np.maximum(0.0, 2.0 * decel * (s[b] - s[seg])))
        v[seg] = np.minimum(v[seg], np.minimum(ramp_out, ramp_in))
    if stop_s is not None:
        wall = np.sqrt(np.maximum(0.0, 2.0 * decel * (stop_s - s)))
        v = np.minimum(v, wall)
    return v * path.directions


def stop_hold_s(scenario: Scenario, route_points: np.ndarray) -> Optional[float]:
    """Rear-axle arclength where the front bumper holds d_safe short of
    the stop line, or None when the scenario has no intersection."""
    zone = scenario.intersection
    if zone is None:
        return None
    p = scenario.vehicle_params
    pt = np.array([zone.stop_line])
    s_line, _, _ = geometry.project_to_polyline(pt, route_points)
    offset = 0.5 * p.wheelbase + 0.5 * p.body_length + scenario.rules.d_safe
    return float(s_line[0]) - offset


def route_from_path(
    path: ReferencePath,
    scenario: Scenario,
    spacing: float,
    v0: float = 0.0,
    stop_s: Optional[float] = None,
    decel: Optional[float] = None,
) -> Route:
    """Resample a geometric path and attach a speed profile."""
    dense = resample(path, spacing) if len(path) > 1 else path
    decel = decel if decel is not None else 0.5 * scenario.vehicle_params.max_accel
    v = speed_profile(dense, scenario.cruise_speed, decel, v0=v0, stop_s=stop_s)
    end_s = dense.length if stop_s is None else min(dense.length, max(stop_s, 0.0))
    return Route(path=dense, v_ref=v, end_s=end_s, stop_s=stop_s)


def initial_route(
    scenario: Scenario,
    spacing: float,
    state: Optional[VehicleState] = None,
    stop_shaping: bool = True,
) -> tuple[Route, np.ndarray]:
    """Nominal lane-following route from the ego pose to the goal.

    Returns the route and the sparse centerline polyline it follows,
    which stays the arclength datum for progress and rule windows even
    after recovery detours replace the tracked path. With stop_shaping
    false the profile ignores any intersection hold point; controllers
    without a supervisor to discharge the wall would otherwise park at
    it forever.
    """
    state = state or scenario.ego_start
    lane = ego_lane(scenario, state.x, state.y)
    pts = np.array([[state.x, state.y], list(scenario.goal.center)])
    s_pair, _, _ = geometry.project_to_polyline(pts, lane.centerline)
    s_ego, s_goal = float(s_pair[0]), float(s_pair[1])
    if s_goal <= s_ego + 1e-9:
        raise ScenarioError("goal does not lie ahead of the ego pose on its lane")
    route_points = clip_polyline(lane.centerline, s_ego, s_goal)
    path = _polyline_path(route_points)
    stop_s = stop_hold_s(scenario, route_points) if stop_shaping else None
    if stop_s is not None and stop_s <= 0.0:
        stop_s = None  # already past the hold point
    route = route_from_path(
        path, scenario, spacing, v0=abs(state.speed), stop_s=stop_s
    )
    return route, route_points

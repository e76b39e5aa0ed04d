"""Static world: lanes, obstacles, goal, intersection zone, plus the
collision and containment queries everything else is built on.

Scenarios are immutable after load; all queries are read-only. The batch
variants operate on (N, 4) state arrays and are the ones the controllers
call in their hot loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry
from .geometry import OrientedRectangle, point_rect_signed, poses_rect_signed
from .vehicle import VehicleParams, VehicleState, footprint, footprint_poses

NO_OBSTACLE_DISTANCE = 1e9  # sentinel logged when the world has no obstacles

EGO_DIRECTION = "ego_direction"
ONCOMING = "oncoming"


class ScenarioError(ValueError):
    """Raised when a scenario file fails parsing or validation."""


@dataclass(frozen=True)
class LaneSegment:
    """A lane corridor: centerline polyline plus a constant width."""

    centerline: np.ndarray  # (M, 2)
    width: float
    direction: str = EGO_DIRECTION
    id: str = "lane"

    def __post_init__(self):
        line = np.asarray(self.centerline, dtype=float)
        object.__setattr__(self, "centerline", line)
        if line.ndim != 2 or line.shape[0] < 2 or line.shape[1] != 2:
            raise ScenarioError(f"lane {self.id}: centerline needs >= 2 points")
        if np.any(np.linalg.norm(np.diff(line, axis=0), axis=1) < 1e-9):
            raise ScenarioError(f"lane {self.id}: consecutive centerline points coincide")
        if self.width <= 0:
            raise ScenarioError(f"lane {self.id}: width must be positive")
        if self.direction not in (EGO_DIRECTION, ONCOMING):
            raise ScenarioError(f"lane {self.id}: unknown direction {self.direction!r}")


@dataclass(frozen=True)
class Obstacle:
    """Stationary oriented-rectangle obstacle (parked or stopped vehicle)."""

    center: tuple
    heading: float
    length: float
    width: float
    id: str = "obstacle"

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ScenarioError(f"obstacle {self.id}: dimensions must be positive")

    @property
    def rect(self) -> OrientedRectangle:
        return OrientedRectangle(
            self.center[0], self.center[1], self.heading, self.length, self.width
        )


@dataclass(frozen=True)
class GoalRegion:
    center: tuple
    radius: float
    target_heading: Optional[float] = None
    heading_tolerance: float = 0.35

    def __post_init__(self):
        if self.radius <= 0:
            raise ScenarioError("goal radius must be positive")

    def contains(self, state: VehicleState) -> bool:
        dx = state.x - self.center[0]
        dy = state.y - self.center[1]
        if dx * dx + dy * dy > self.radius * self.radius:
            return False
        if self.target_heading is None:
            return True
        return abs(geometry.wrap_angle(state.heading - self.target_heading)) <= self.heading_tolerance


@dataclass(frozen=True)
class IntersectionZone:
    """Axis-aligned box the stop rule guards, plus the stop-line point."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    stop_line: tuple = None  # (x, y) on the approach; None = derived from zone edge

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ScenarioError("intersection zone must have positive area")

    @property
    def rect(self) -> OrientedRectangle:
        return OrientedRectangle(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
            0.0,
            self.x_max - self.x_min,
            self.y_max - self.y_min,
        )


@dataclass(frozen=True)
class RuleParams:
    """Parameters shared by the traffic-rule formulas.

    dv_max falls back to the vehicle's comfort bound when None. Weights
    default to the single STL penalty weight; per-rule overrides come from
    the scenario file.
    """

    d_safe: float = 0.5
    dv_max: Optional[float] = None
    stop_hold: float = 3.0
    oncoming_lookahead: float = 8.0
    weight: float = 1000.0
    weights: dict = field(default_factory=dict)  # rule name -> weight override


@dataclass
class Scenario:
    lanes: list
    obstacles: list
    ego_start: VehicleState
    goal: GoalRegion
    vehicle_params: VehicleParams
    intersection: Optional[IntersectionZone] = None
    rules: RuleParams = field(default_factory=RuleParams)
    name: str = "scenario"
    cruise_speed: float = 2.0
    grid_overrides: dict = field(default_factory=dict)
    mppi_overrides: dict = field(default_factory=dict)
    deadlock_overrides: dict = field(default_factory=dict)

    def validate(self) -> "Scenario":
        if not self.lanes:
            raise ScenarioError("scenario has no lanes")
        if in_collision(self.ego_start, self):
            raise ScenarioError("ego_start is in collision")
        gx, gy = self.goal.center
        for ob in self.obstacles:
            if point_rect_signed(np.array([[gx, gy]]), ob.rect)[0] <= 0.0:
                raise ScenarioError(f"goal center lies inside obstacle {ob.id}")
        return self

    def bounds(self, margin: float = 0.0):
        """Axis-aligned (x_min, x_max, y_min, y_max) covering lanes and obstacles."""
        xs, ys = [], []
        for lane in self.lanes:
            r = 0.5 * lane.width
            xs += [lane.centerline[:, 0].min() - r, lane.centerline[:, 0].max() + r]
            ys += [lane.centerline[:, 1].min() - r, lane.centerline[:, 1].max() + r]
        for ob in self.obstacles:
            c = ob.rect.corners()
            xs += [c[:, 0].min(), c[:, 0].max()]
            ys += [c[:, 1].min(), c[:, 1].max()]
        return (
            min(xs) - margin,
            max(xs) + margin,
            min(ys) - margin,
            max(ys) + margin,
        )

    def oncoming_lanes(self):
        return [ln for ln in self.lanes if ln.direction == ONCOMING]


def min_obstacle_distance(state: VehicleState, scenario: Scenario) -> float:
    """Signed distance from the ego footprint to the nearest obstacle.

    Negative values are penetration depth; +inf (as a large sentinel)
    when the scenario has no obstacles.
    """
    if not scenario.obstacles:
        return float("inf")
    arr = state.as_array()[None, :]
    return float(batch_min_obstacle_distance(arr, scenario)[0])


def batch_min_obstacle_distance(
    states: np.ndarray,
    scenario: Scenario,
    params: VehicleParams = None,
    cap: float = None,
) -> np.ndarray:
    """Exact signed footprint-to-nearest-obstacle distance for (N, 4) states.

    Per-obstacle work is pruned with center-distance bounds: an obstacle is
    evaluated exactly only where its lower bound beats the best upper bound,
    which leaves the minimum unchanged.

    With `cap`, the result is min(distance, cap): values at or above the
    cap are reported as the cap, which skips exact evaluation for poses
    that are provably at least that clear. Callers that only act on
    distances below a threshold pass a cap above it.
    """
    params = params or scenario.vehicle_params
    states = np.atleast_2d(states)
    n = states.shape[0]
    if not scenario.obstacles:
        return np.full(n, cap if cap is not None else float("inf"))
    poses = footprint_poses(states, params)
    centers = poses[:, :2]
    r_ego = 0.5 * float(np.hypot(params.body_length, params.body_width))
    center_d = np.stack(
        [point_rect_signed(centers, ob.rect) for ob in scenario.obstacles], axis=1
    )
    upper = center_d.min(axis=1)
    if cap is not None:
        upper = np.minimum(upper, cap)
        out = np.full(n, float(cap))
    else:
        out = np.full(n, np.inf)
    for j, ob in enumerate(scenario.obstacles):
        mask = center_d[:, j] - r_ego <= upper + 1e-9
        if not mask.any():
            continue
        d = poses_rect_signed(
            poses[mask], params.body_length, params.body_width, ob.rect
        )
        np.minimum.at(out, np.flatnonzero(mask), d)
    return out


def batch_lane_center_distance(points: np.ndarray, lane: LaneSegment) -> np.ndarray:
    _, _, dist = geometry.project_to_polyline(points, lane.centerline)
    return dist


def batch_in_corridor(points: np.ndarray, lanes) -> np.ndarray:
    """Boolean (N,): point within at least one lane corridor."""
    points = np.atleast_2d(points)
    inside = np.zeros(points.shape[0], dtype=bool)
    for lane in lanes:
        inside |= batch_lane_center_distance(points, lane) <= 0.5 * lane.width
    return inside


def batch_road_contained(
    states: np.ndarray, scenario: Scenario, params: VehicleParams = None
) -> np.ndarray:
    """Boolean (N,): footprint corners and center all inside the lane union."""
    params = params or scenario.vehicle_params
    states = np.atleast_2d(states)
    poses = footprint_poses(states, params)
    corners = geometry.rect_corners(poses, params.body_length, params.body_width)
    pts = np.concatenate([corners.reshape(-1, 2), poses[:, :2]], axis=0)
    ok = batch_in_corridor(pts, scenario.lanes)
    n = states.shape[0]
    return ok[: 4 * n].reshape(n, 4).all(axis=1) & ok[4 * n :]


def in_collision(state: VehicleState, scenario: Scenario) -> bool:
    """Footprint penetrates an obstacle or leaves the road.

    Touching an obstacle boundary (distance exactly 0) is not a collision;
    any footprint point outside the lane union is.
    """
    if min_obstacle_distance(state, scenario) < 0.0:
        return True
    arr = state.as_array()[None, :]
    return not bool(batch_road_contained(arr, scenario)[0])


def lane_containment(state: VehicleState, scenario: Scenario) -> set:
    """Ids of lanes whose corridor contains the footprint center."""
    pose = footprint_poses(state.as_array()[None, :], scenario.vehicle_params)
    pt = pose[:, :2]
    found = set()
    for lane in scenario.lanes:
        if batch_lane_center_distance(pt, lane)[0] <= 0.5 * lane.width:
            found.add(lane.id)
    return found


def obstacle_route_intervals(scenario: Scenario, route_points: np.ndarray):
    """Per obstacle: (s_min, s_max) projection onto a route polyline and
    whether it occupies an oncoming-direction lane (center inside the
    corridor). A wreck parked in the ego lane whose corner pokes across
    the centerline is not oncoming traffic; marginal overhangs are the
    clearance rules' business, not lane discipline's.

    Used by the oncoming-lane-free query and the deadlock exit predicate.
    """
    out = []
    oncoming = scenario.oncoming_lanes()
    for ob in scenario.obstacles:
        corners = ob.rect.corners()
        s, _, _ = geometry.project_to_polyline(corners, route_points)
        occupies = bool(
            oncoming
            and batch_in_corridor(np.array([ob.center], dtype=float), oncoming)[0]
        )
        out.append((float(s.min()), float(s.max()), occupies))
    return out


def oncoming_lane_free(
    scenario: Scenario, route_points: np.ndarray, s_from: float, s_to: float
) -> bool:
    """True iff no obstacle occupies the oncoming corridor within the
    route-arclength interval [s_from, s_to].

    Vacuously true when the scenario has no oncoming lane.
    """
    if not scenario.oncoming_lanes():
        return True
    for s_min, s_max, overlaps in obstacle_route_intervals(scenario, route_points):
        if overlaps and s_max >= s_from and s_min <= s_to:
            return False
    return True

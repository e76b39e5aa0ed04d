"""Deadlock detection and supervised recovery.

The supervisor watches route progress, shapes the tracked speed profile
(stop-line holds and approach walls before known blockages), and when
the vehicle stalls against a blocked route it plans a recovery path
around the blocking chain, hands it to the controller, and declares
recovery complete once the vehicle is past the blockage and back in its
own lane.

Phases move Nominal -> DeadlockDetected -> Replanned -> Recovering ->
Recovered, with Failed reachable from anywhere. Re-detection during
recovery replans from scratch, capped before giving up.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import geometry
from .astar import AstarConfig, ReferencePath, plan, poses_collision_free
from .grid import build_grid
from .route import Route, route_from_path, stop_hold_s
from .stl.rules import RuleContext
from .vehicle import Trajectory, VehicleState, footprint_poses
from .world import (
    EGO_DIRECTION,
    GoalRegion,
    Scenario,
    batch_in_corridor,
)

PHASES = (
    "Nominal",
    "DeadlockDetected",
    "Replanned",
    "Recovering",
    "Recovered",
    "Failed",
)

MAX_REPLANS = 3


@dataclass(frozen=True)
class DeadlockConfig:
    progress_epsilon: float = 0.5  # meters over the window
    window: float = 3.0  # seconds
    blocked_lookahead: float = 8.0  # meters of route checked ahead

    def __post_init__(self):
        if min(self.progress_epsilon, self.window, self.blocked_lookahead) <= 0:
            raise ValueError("deadlock parameters must be positive")


def deadlock_config_for(scenario: Scenario, **extra) -> DeadlockConfig:
    kw = dict(scenario.deadlock_overrides or {})
    kw.update(extra)
    return DeadlockConfig(**{k: float(v) for k, v in kw.items()})


def blocked_intervals(
    path: ReferencePath,
    scenario: Scenario,
    inflation: float,
    merge_gap: float,
) -> list:
    """Arclength intervals of a path whose footprint sweep hits an
    inflated obstacle, with intervals closer than merge_gap merged.

    A merged interval is one blocking chain: a gap the vehicle cannot
    usefully re-enter between two blockages counts as part of the same
    blockage.
    """
    if not scenario.obstacles or len(path) == 0:
        return []
    params = scenario.vehicle_params
    fp = footprint_poses(path.poses, params)
    blocked = np.zeros(len(path), dtype=bool)
    for ob in scenario.obstacles:
        rect = geometry.OrientedRectangle(
            ob.center[0],
            ob.center[1],
            ob.heading,
            ob.length + 2.0 * inflation,
            ob.width + 2.0 * inflation,
        )
        blocked |= (
            geometry.poses_rect_signed(fp, params.body_length, params.body_width, rect)
            < 0.0
        )
    s = path.cumulative_s
    intervals = []
    run_start = None
    for i, hit in enumerate(blocked):
        if hit and run_start is None:
            run_start = i
        elif not hit and run_start is not None:
            intervals.append((float(s[run_start]), float(s[i - 1])))
            run_start = None
    if run_start is not None:
        intervals.append((float(s[run_start]), float(s[-1])))

    merged = []
    for lo, hi in intervals:
        if merged and lo - merged[-1][1] <= merge_gap:
            merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    return merged


def detect(
    history: Trajectory,
    route: Route,
    scenario: Scenario,
    config: DeadlockConfig,
) -> bool:
    """Deadlock test over the trailing window of an executed trace.

    True iff route progress over the trailing window is below
    progress_epsilon, the goal is not reached, and the next
    blocked_lookahead meters of the route hit an obstacle-inflated
    region. The third clause separates "stuck behind a blockage" from
    merely slow traffic; a rest at a clear red-light-like wall is not a
    deadlock. Pure function of its arguments, replayable from logs.
    """
    times = history.times()
    if times[-1] - times[0] < config.window - 1e-9:
        return False
    if scenario.goal.contains(history.states[-1]):
        return False
    states = history.as_array()
    keep = times >= times[-1] - config.window - 1e-9
    pts = states[keep][:, :2]
    line = route.path.poses[:, :2]
    s, _, _ = geometry.project_to_polyline(pts[[0, -1]], line)
    if float(s[1] - s[0]) >= config.progress_epsilon:
        return False
    s_now = float(s[1])
    inflation = 0.5 * scenario.rules.d_safe
    for lo, hi in blocked_intervals(
        route.path, scenario, inflation, config.blocked_lookahead
    ):
        if hi >= s_now - 1e-9 and lo <= s_now + config.blocked_lookahead:
            return True
    return False


class RecoverySupervisor:
    """Phase machine wrapping one planner for one episode.

    Owns the tracked route's lifecycle: the initial lane route, the
    intersection stop-wall discharge, approach walls short of known
    blockages, recovery replans around them, and the resume of the
    original route. Call pre_tick before each planner tick.
    """

    def __init__(
        self,
        scenario: Scenario,
        planner,
        ctx: RuleContext,
        route: Route,
        route_points: np.ndarray,
        config: Optional[DeadlockConfig] = None,
        astar_config: Optional[AstarConfig] = None,
        spacing: float = 0.25,
    ):
        self.scenario = scenario
        self.planner = planner
        self.ctx = ctx
        self.config = config or deadlock_config_for(scenario)
        self.astar_config = astar_config or AstarConfig()
        self.spacing = spacing
        self.grid = build_grid(scenario)
        self.params = scenario.vehicle_params
        self.inflation = 0.5 * scenario.rules.d_safe

        self.phase = "Nominal"
        self.phase_log = [(0.0, "Nominal", "episode start")]
        self.replans = 0
        self.failed_reason = ""
        self.exit_s: Optional[float] = None

        self._history = deque()  # (t, s on the tracked route)
        self._ego_lanes = [
            ln for ln in scenario.lanes if ln.direction == EGO_DIRECTION
        ]
        self._original_path = route.path
        self._orig_blocked = blocked_intervals(
            route.path, scenario, self.inflation, self.config.blocked_lookahead
        )
        # original-path poses located on the rule datum, for translating
        # exit thresholds into rejoin poses
        s_on_datum, _, _ = geometry.project_to_polyline(
            route.path.poses[:, :2], ctx.route_points
        )
        self._orig_path_datum_s = s_on_datum
        self._awaiting_stop = False
        self._current_path = route.path
        self.installed_paths: list = []  # every distinct reference handed out
        self._install(route.path, v0=abs(scenario.ego_start.speed), s_from=0.0)

    # -- route shaping ------------------------------------------------

    def _stop_wall(self, path: ReferencePath, s_from: float) -> Optional[float]:
        if self.scenario.intersection is None:
            return None
        if self.ctx.stop_done or self.ctx.stop_violated:
            return None
        wall = stop_hold_s(self.scenario, path.poses[:, :2])
        if wall is not None and wall > s_from + 0.05:
            return wall
        return None

    def _approach_wall(self, blocked: list, s_from: float) -> Optional[float]:
        # Rest two safety margins short of the blockage: the stop itself
        # only needs one, but a recovery replan from the rest pose wants
        # enough free space around the start to plan at wide clearance.
        for lo, hi in blocked:
            if hi > s_from + 1e-6:
                wall = lo - 2.0 * self.scenario.rules.d_safe
                if wall > s_from + 0.05:
                    return wall
                return None
        return None

    def _install(self, path: ReferencePath, v0: float, s_from: float):
        """Profile a path with the binding wall and hand it to the planner."""
        blocked = blocked_intervals(
            path, self.scenario, self.inflation, self.config.blocked_lookahead
        )
        walls = []
        stop_wall = self._stop_wall(path, s_from)
        if stop_wall is not None:
            walls.append(stop_wall)
        approach = self._approach_wall(blocked, s_from)
        if approach is not None:
            walls.append(approach)
        wall = min(walls) if walls else None
        self._awaiting_stop = stop_wall is not None and wall == stop_wall
        route = route_from_path(
            path, self.scenario, self.spacing, v0=v0, stop_s=wall
        )
        self._current_path = path
        self._blocked = blocked
        self.route = route
        if not self.installed_paths or self.installed_paths[-1] is not path:
            self.installed_paths.append(path)
        self.planner.set_route(route)

    # -- per-tick supervision ------------------------------------------

    def pre_tick(self, t: float, state: VehicleState):
        """Advance the phase machine before the planner tick at time t."""
        if self.phase == "Failed":
            return
        tracker = self.planner.tracker
        s_arr, _, _, _ = tracker.locate(
            np.array([[state.x, state.y]]), 0, tracker.n_seg
        )
        s_now = float(s_arr[0])
        self._history.append((t, s_now))
        while self._history and self._history[0][0] < t - self.config.window - 1e-9:
            self._history.popleft()

        if self._awaiting_stop and (self.ctx.stop_done or self.ctx.stop_violated):
            # stop discharged (or lost): re-profile the same path so the
            # next wall, if any, becomes the binding one
            self._install(self._current_path, v0=0.0, s_from=s_now)

        if self.scenario.goal.contains(state):
            return

        if self.phase in ("Nominal", "Recovered"):
            if self._stalled() and self._blocked_ahead(s_now):
                self._replan(t, state)
        elif self.phase == "Recovering":
            if self._exit_attained(state):
                self.phase = "Recovered"
                self._log(t, "Recovered", "past blockage, back in lane")
                self._history.clear()
                s_resume, _, _ = geometry.project_to_polyline(
                    np.array([[state.x, state.y]]),
                    self._original_path.poses[:, :2],
                )
                self._install(
                    self._original_path, v0=0.0, s_from=float(s_resume[0])
                )
            elif self._stalled():
                # drifted off the recovery path or met a new blockage;
                # route-blockage clause is skipped because the stall
                # itself is the failure of the recovery plan
                self._replan(t, state)

    def fail(self, t: float, reason: str):
        self.phase = "Failed"
        self.failed_reason = reason
        self._log(t, "Failed", reason)

    # -- internals ------------------------------------------------------

    def _log(self, t: float, phase: str, note: str):
        self.phase_log.append((float(t), phase, note))

    def _stalled(self) -> bool:
        if not self._history:
            return False
        t0, s0 = self._history[0]
        t1, s1 = self._history[-1]
        if t1 - t0 < self.config.window - 1e-6:
            return False
        return (s1 - s0) < self.config.progress_epsilon

    def _blocked_ahead(self, s_now: float) -> bool:
        look = self.config.blocked_lookahead
        return any(
            hi >= s_now - 1e-9 and lo <= s_now + look for lo, hi in self._blocked
        )

    def _exit_attained(self, state: VehicleState) -> bool:
        if self.exit_s is None:
            return False
        s, _, _ = geometry.project_to_polyline(
            np.array([[state.x, state.y]]), self.ctx.route_points
        )
        if float(s[0]) < self.exit_s:
            return False
        center = footprint_poses(state.as_array()[None, :], self.params)[0, :2]
        if not self._ego_lanes:
            return True
        return bool(batch_in_corridor(center[None, :], self._ego_lanes)[0])

    def _datum_s(self, state: VehicleState) -> float:
        s, _, _ = geometry.project_to_polyline(
            np.array([[state.x, state.y]]), self.ctx.route_points
        )
        return float(s[0])

    def _rejoin_goal(self, exit_s: float) -> GoalRegion:
        """Goal region on the original path just past the exit threshold."""
        radius = max(
            2.0 * self.grid.config.fine_cell, 0.25 * self.params.body_length
        )
        target = exit_s + radius + 0.5 * self.spacing
        idx = int(np.searchsorted(self._orig_path_datum_s, target))
        poses = self._original_path.poses
        while idx < len(poses):
            if bool(
                poses_collision_free(
                    poses[idx : idx + 1], self.scenario, self.inflation, self.params
                )[0]
            ):
                break
            idx += 1
        if idx >= len(poses):
            return self.scenario.goal
        pose = poses[idx]
        return GoalRegion(
            (float(pose[0]), float(pose[1])),
            radius,
            target_heading=float(pose[2]),
            heading_tolerance=0.5,
        )

    def _replan(self, t: float, state: VehicleState):
        self.replans += 1
        self._log(
            t,
            "DeadlockDetected",
            f"progress < {self.config.progress_epsilon} m "
            f"over {self.config.window} s",
        )
        self.phase = "DeadlockDetected"
        if self.replans > MAX_REPLANS:
            self.fail(t, f"still deadlocked after {MAX_REPLANS} recovery plans")
            return

        s_datum = self._datum_s(state)
        chain = next(
            (iv for iv in self._orig_blocked if iv[1] > s_datum + 1e-6), None
        )
        if chain is not None:
            self.exit_s = chain[1] + self.config.blocked_lookahead
            self.ctx.set_exit(self.exit_s)
        if self.exit_s is not None and self.exit_s < self._orig_path_datum_s[-1]:
            goal = self._rejoin_goal(self.exit_s)
        else:
            goal = self.scenario.goal

        # Prefer a wide-clearance detour; the executed trajectory tracks
        # the reference to within a couple tenths, so the margin has to
        # live in the plan. Fall back toward the tight-maze ratio only
        # when the wide plan has nowhere to go.
        result = None
        for ratio in (1.4, 0.9, self.astar_config.clearance_ratio):
            cfg = replace(self.astar_config, clearance_ratio=ratio)
            result = plan(self.scenario, self.grid, state, goal, cfg)
            if result.ok:
                break
        if not result.ok:
            self.fail(t, f"recovery replanning infeasible: {result.reason}")
            return

        first_dir = float(result.path.directions[min(1, len(result.path) - 1)])
        v0 = abs(state.speed) if state.speed * first_dir >= 0 else 0.0
        self._log(
            t,
            "Replanned",
            f"{len(result.path)} poses, {result.path.length:.1f} m "
            f"to rejoin at ({goal.center[0]:.1f}, {goal.center[1]:.1f})",
        )
        self._install(result.path, v0=v0, s_from=0.0)
        self.phase = "Recovering"
        self._log(t, "Recovering", "")
        self._history.clear()

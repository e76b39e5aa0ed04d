"""Hybrid A* search over the variable-resolution grid.

Expansions are short steered arcs integrated with the same Euler update
the vehicle model uses, so every returned path re-simulates exactly.
Primitive length follows the local cell size: long arcs along open lanes,
short arcs near obstacles. Obstacles are inflated by half the safety
distance during the search; the controller enforces the rest softly.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import geometry
from .grid import FORWARD, REVERSE, HybridGrid
from .vehicle import VehicleParams, VehicleState, footprint_poses
from .world import GoalRegion, Scenario, batch_road_contained

# worst-case ratio of 8-connected grid metric to Euclidean distance
_D8_OVERSHOOT = math.sqrt(4.0 - 2.0 * math.sqrt(2.0))


@dataclass(frozen=True)
class AstarConfig:
    w_rev: float = 2.0  # extra cost per meter of reverse travel
    w_switch: float = 5.0  # per direction change
    w_steer: float = 1.0  # per radian of steering change between edges
    node_budget: int = 200_000
    clearance_ratio: float = 0.5  # footprint inflation, x d_safe


@dataclass
class ReferencePath:
    """Geometric path: poses with travel direction, no timing.

    edges carries per-primitive metadata (start index into poses, steer,
    signed speed, substep dt, substep count) for re-simulation checks;
    it is dropped by resampling.
    """

    poses: np.ndarray  # (N, 3) of x, y, heading
    directions: np.ndarray  # (N,) of +1 forward / -1 reverse
    cumulative_s: np.ndarray  # (N,)
    edges: Optional[list] = None

    def __len__(self) -> int:
        return self.poses.shape[0]

    @property
    def length(self) -> float:
        return float(self.cumulative_s[-1])

    def xy(self) -> np.ndarray:
        return self.poses[:, :2]

    def cusp_indices(self) -> np.ndarray:
        """Indices of direction-switch vertices: the rest pose where the
        vehicle stops and reverses, i.e. the last pose of the outgoing
        leg (directions[i] is the direction of the arc arriving at i)."""
        return np.flatnonzero(self.directions[1:] != self.directions[:-1])


@dataclass
class PlanResult:
    status: str  # "ok" or "infeasible"
    path: Optional[ReferencePath]
    expansions: int = 0
    pushed: int = 0
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def poses_collision_free(
    poses: np.ndarray,
    scenario: Scenario,
    inflation: float = 0.0,
    params: VehicleParams = None,
) -> np.ndarray:
    """Boolean (N,): footprint clear of (inflated) obstacles and on-road."""
    params = params or scenario.vehicle_params
    poses = np.atleast_2d(poses)
    free = batch_road_contained(poses, scenario, params)
    if not scenario.obstacles:
        return free
    fp = footprint_poses(poses, params)
    for ob in scenario.obstacles:
        rect = geometry.OrientedRectangle(
            ob.center[0],
            ob.center[1],
            ob.heading,
            ob.length + 2.0 * inflation,
            ob.width + 2.0 * inflation,
        )
        free &= (
            geometry.poses_rect_signed(fp, params.body_length, params.body_width, rect)
            >= 0.0
        )
    return free


class _FloodHeuristic:
    """Obstacle-aware 2D lower bound from a one-time Dijkstra flood fill.

    Cells are blocked only when they lie entirely off-road or entirely
    inside an inflated obstacle, so every reachable rear-axle position
    keeps a free cell; the grid-metric overshoot and the discretization
    slop are subtracted to stay a lower bound on path arclength.
    """

    def __init__(self, scenario: Scenario, grid: HybridGrid, goal: GoalRegion, inflation: float):
        self.cell = grid.config.fine_cell
        self.half_diag = 0.5 * math.sqrt(2.0) * self.cell
        self.x0, self.y0 = grid.x_min, grid.y_min
        self.nx = max(1, int(math.ceil((grid.x_max - grid.x_min) / self.cell)))
        self.ny = max(1, int(math.ceil((grid.y_max - grid.y_min) / self.cell)))
        self.goal = goal

        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.cell
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.cell
        gx, gy = np.meshgrid(xs, ys)  # (ny, nx)
        centers = np.stack([gx.ravel(), gy.ravel()], axis=1)

        outside = np.full(centers.shape[0], np.inf)
        for lane in scenario.lanes:
            _, _, dist = geometry.project_to_polyline(centers, lane.centerline)
            outside = np.minimum(outside, dist - 0.5 * lane.width)
        blocked = outside > self.half_diag
        for ob in scenario.obstacles:
            rect = geometry.OrientedRectangle(
                ob.center[0],
                ob.center[1],
                ob.heading,
                ob.length + 2.0 * inflation,
                ob.width + 2.0 * inflation,
            )
            blocked |= geometry.point_rect_signed(centers, rect) <= -self.half_diag

        goal_idx = self._cell_index(goal.center[0], goal.center[1])
        blocked[goal_idx] = False

        self.dist = self._flood(blocked, goal_idx)

    def _cell_index(self, x: float, y: float) -> int:
        ix = min(max(int((x - self.x0) / self.cell), 0), self.nx - 1)
        iy = min(max(int((y - self.y0) / self.cell), 0), self.ny - 1)
        return iy * self.nx + ix

    def _flood(self, blocked: np.ndarray, goal_idx: int) -> np.ndarray:
        n = blocked.shape[0]
        idx = np.arange(n)
        ix = idx % self.nx
        iy = idx // self.nx
        rows, cols, weights = [], [], []
        for dx, dy in ((1, 0), (0, 1), (1, 1), (1, -1)):
            jx, jy = ix + dx, iy + dy
            valid = (jx >= 0) & (jx < self.nx) & (jy >= 0) & (jy < self.ny)
            src = idx[valid]
            dst = (jy * self.nx + jx)[valid]
            ok = ~blocked[src] & ~blocked[dst]
            rows.append(src[ok])
            cols.append(dst[ok])
            w = self.cell * (math.sqrt(2.0) if dx and dy else 1.0)
            weights.append(np.full(ok.sum(), w))
        graph = csr_matrix(
            (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )
        return dijkstra(graph, directed=False, indices=goal_idx)

    def of_poses(self, poses: np.ndarray) -> np.ndarray:
        """Lower bound on remaining arclength for (N, 3) poses."""
        poses = np.atleast_2d(poses)
        gx, gy = self.goal.center
        euclid = np.hypot(poses[:, 0] - gx, poses[:, 1] - gy) - self.goal.radius
        ix = np.clip(((poses[:, 0] - self.x0) / self.cell).astype(int), 0, self.nx - 1)
        iy = np.clip(((poses[:, 1] - self.y0) / self.cell).astype(int), 0, self.ny - 1)
        flood = (
            self.dist[iy * self.nx + ix] / _D8_OVERSHOOT
            - 2.0 * self.half_diag
            - self.goal.radius
        )
        return np.maximum(0.0, np.maximum(euclid, flood))


def _goal_reached(pose, goal: GoalRegion) -> bool:
    dx = pose[0] - goal.center[0]
    dy = pose[1] - goal.center[1]
    if dx * dx + dy * dy > goal.radius * goal.radius:
        return False
    if goal.target_heading is None:
        return True
    return abs(geometry.wrap_angle(pose[2] - goal.target_heading)) <= goal.heading_tolerance


def plan(
    scenario: Scenario,
    grid: HybridGrid,
    start: VehicleState,
    goal: GoalRegion,
    config: AstarConfig = None,
) -> PlanResult:
    """Search for a feasible path from start into the goal region.

    Returns PlanResult with status "ok" and the path, or "infeasible"
    with reason "unreachable" (search space or flood fill exhausted) or
    "budget_exhausted" (node budget hit first). Never raises for a
    blocked world; a start pose in collision yields reason "start_blocked".
    """
    config = config or AstarConfig()
    params = scenario.vehicle_params
    inflation = config.clearance_ratio * scenario.rules.d_safe

    start_pose = (start.x, start.y, start.heading)
    if not grid.in_bounds(start.x, start.y):
        return PlanResult("infeasible", None, reason="start_out_of_bounds")
    if not bool(poses_collision_free(np.array([start_pose]), scenario, inflation, params)[0]):
        return PlanResult("infeasible", None, reason="start_blocked")

    heuristic = _FloodHeuristic(scenario, grid, goal, inflation)
    if not np.isfinite(heuristic.of_poses(np.array([start_pose]))[0]):
        return PlanResult("infeasible", None, reason="unreachable")

    max_s = params.max_steer
    steer_set = [-max_s, -0.5 * max_s, 0.0, 0.5 * max_s, max_s]
    fwd_speed = min(1.0, params.max_speed)
    rev_speed = min(1.0, -params.min_speed) if params.min_speed < 0 else 0.0
    prims = [(s, FORWARD, fwd_speed) for s in steer_set]
    if rev_speed > 0:
        prims += [(s, REVERSE, rev_speed) for s in steer_set]
    prim_steer = np.array([p[0] for p in prims])
    prim_dir = np.array([p[1] for p in prims])
    prim_speed = np.array([p[2] * p[1] for p in prims])  # signed

    start_dir = REVERSE if start.speed < 0 else FORWARD
    start_key = grid.node_of_state(
        VehicleState(start.x, start.y, start.heading, float(start_dir))
    )
    # per node: g, exact pose, arrival steer, parent key, edge record
    info = {start_key: (0.0, start_pose, 0.0, None, None)}
    h0 = float(heuristic.of_poses(np.array([start_pose]))[0])
    heap = [(h0, tuple(start_key), 0, 0.0)]
    seq = 1
    expansions = 0
    pushed = 1

    goal_key = None
    while heap:
        f, key, _, g_at_push = heapq.heappop(heap)
        g, pose, arrival_steer, _, _ = info[key]
        if g_at_push > g + 1e-12:  # superseded by a cheaper arrival
            continue
        if _goal_reached(pose, goal):
            goal_key = key
            break
        expansions += 1
        if expansions > config.node_budget:
            return PlanResult(
                "infeasible", None, expansions, pushed, reason="budget_exhausted"
            )

        arc = math.sqrt(2.0) * grid.cell_size_at(pose[0], pose[1])
        n_sub = max(1, int(math.ceil(arc / grid.config.fine_cell)))
        p = len(prims)
        # integrate all primitives together, keeping every substep pose
        xs = np.full(p, pose[0])
        ys = np.full(p, pose[1])
        ths = np.full(p, pose[2])
        dts = arc / (n_sub * np.abs(prim_speed))
        sub_poses = np.empty((p, n_sub, 3))
        yaw_rate = prim_speed / params.wheelbase * np.tan(prim_steer)
        for i in range(n_sub):
            xs = xs + prim_speed * np.cos(ths) * dts
            ys = ys + prim_speed * np.sin(ths) * dts
            ths = geometry.wrap_angle(ths + yaw_rate * dts)
            sub_poses[:, i, 0] = xs
            sub_poses[:, i, 1] = ys
            sub_poses[:, i, 2] = ths

        flat = sub_poses.reshape(-1, 3)
        in_bounds = (
            (flat[:, 0] >= grid.x_min)
            & (flat[:, 0] <= grid.x_max)
            & (flat[:, 1] >= grid.y_min)
            & (flat[:, 1] <= grid.y_max)
        )
        free = poses_collision_free(flat, scenario, inflation, params)
        valid = (free & in_bounds).reshape(p, n_sub).all(axis=1)
        if not valid.any():
            continue

        finals = sub_poses[:, -1, :]
        h_vals = heuristic.of_poses(finals)
        dir_key = key[4]
        for j in range(p):
            if not valid[j]:
                continue
            if not np.isfinite(h_vals[j]):
                continue
            steer_j = float(prim_steer[j])
            dir_j = int(prim_dir[j])
            cost = arc
            if dir_j == REVERSE:
                cost += config.w_rev * arc
            if dir_j != dir_key:
                cost += config.w_switch
            cost += config.w_steer * abs(steer_j - arrival_steer)
            g_new = g + cost
            child_pose = (float(finals[j, 0]), float(finals[j, 1]), float(finals[j, 2]))
            child_key = grid.node_of(child_pose[0], child_pose[1], child_pose[2], dir_j)
            old = info.get(child_key)
            if old is not None and old[0] <= g_new + 1e-12:
                continue
            edge = (steer_j, float(prim_speed[j]), float(dts[j]), n_sub)
            info[child_key] = (g_new, child_pose, steer_j, key, edge)
            heapq.heappush(heap, (g_new + float(h_vals[j]), tuple(child_key), seq, g_new))
            seq += 1
            pushed += 1

    if goal_key is None:
        return PlanResult("infeasible", None, expansions, pushed, reason="unreachable")

    return PlanResult(
        "ok",
        _reconstruct(info, goal_key, params),
        expansions,
        pushed,
    )


def _reconstruct(info, goal_key, params: VehicleParams) -> ReferencePath:
    chain = []
    key = goal_key
    while True:
        g, pose, steer, parent, edge = info[key]
        chain.append((pose, edge, parent))
        if parent is None:
            break
        key = parent
    chain.reverse()

    poses = [chain[0][0]]
    directions = [FORWARD]
    svals = [0.0]
    edges = []
    for pose, edge, parent in chain[1:]:
        steer, speed, dt_sub, n_sub = edge
        start_pose = poses[-1]
        edges.append(
            {
                "start_index": len(poses) - 1,
                "steer": steer,
                "speed": speed,
                "dt": dt_sub,
                "steps": n_sub,
            }
        )
        x, y, th = start_pose
        ds = abs(speed) * dt_sub
        direction = FORWARD if speed > 0 else REVERSE
        for _ in range(n_sub):
            x = x + speed * math.cos(th) * dt_sub
            y = y + speed * math.sin(th) * dt_sub
            th = geometry.wrap_angle(th + speed / params.wheelbase * math.tan(steer) * dt_sub)
            poses.append((x, y, th))
            directions.append(direction)
            svals.append(svals[-1] + ds)
    directions[0] = directions[1] if len(directions) > 1 else FORWARD

    return ReferencePath(
        poses=np.array(poses),
        directions=np.array(directions, dtype=int),
        cumulative_s=np.array(svals),
        edges=edges,
    )


def resample(path: ReferencePath, spacing: float) -> ReferencePath:
    """Uniform-arclength resampling; cusps are kept exactly.

    Headings are interpolated along the unwrapped heading profile of each
    direction-constant segment.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    breaks = [0] + list(path.cusp_indices()) + [len(path) - 1]
    breaks = sorted(set(b for b in breaks if 0 <= b < len(path)))
    if len(path) == 1:
        return ReferencePath(
            path.poses.copy(), path.directions.copy(), path.cumulative_s.copy()
        )

    new_poses, new_dirs, new_s = [], [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        s_seg = path.cumulative_s[a : b + 1]
        span = s_seg[-1] - s_seg[0]
        n_pts = max(2, int(math.ceil(span / spacing)) + 1)
        targets = np.linspace(s_seg[0], s_seg[-1], n_pts)
        x = np.interp(targets, s_seg, path.poses[a : b + 1, 0])
        y = np.interp(targets, s_seg, path.poses[a : b + 1, 1])
        heading = np.unwrap(path.poses[a : b + 1, 2])
        th = geometry.wrap_angle(np.interp(targets, s_seg, heading))
        direction = path.directions[b]
        seg = np.stack([x, y, th], axis=1)
        if new_poses:  # cusp pose already emitted by the previous segment
            seg = seg[1:]
            targets = targets[1:]
        new_poses.append(seg)
        new_dirs.append(np.full(seg.shape[0], direction, dtype=int))
        new_s.append(targets)

    poses = np.concatenate(new_poses)
    dirs = np.concatenate(new_dirs)
    diffs = np.linalg.norm(np.diff(poses[:, :2], axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(diffs)])
    return ReferencePath(poses=poses, directions=dirs, cumulative_s=s)


def path_to_csv(path: ReferencePath) -> str:
    """CSV form (s, x, y, heading, direction) for plotting and reuse."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["s", "x", "y", "heading", "direction"])
    for i in range(len(path)):
        writer.writerow(
            [
                f"{path.cumulative_s[i]:.6f}",
                f"{path.poses[i, 0]:.6f}",
                f"{path.poses[i, 1]:.6f}",
                f"{path.poses[i, 2]:.6f}",
                int(path.directions[i]),
            ]
        )
    return buf.getvalue()

"""Gradient-descent MPC baseline with soft clearance penalties.

A conventional receding-horizon tracker for the comparison runs: it
follows the lane reference and keeps obstacles away with a smooth
hinge on clearance, but knows nothing about traffic rules, stop lines,
or deadlock. Descent is plain finite-difference gradient steps with a
halving line search, so the controller is fully deterministic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry, world
from .mppi import RouteTracker, _tracker_spacing
from .route import Route
from .vehicle import ControlInput, VehicleState, rollout_batch
from .world import Scenario


@dataclass(frozen=True)
class BaselineConfig:
    horizon: int = 50
    dt: float = 0.1
    w_path: float = 100.0
    w_soft: float = 400.0  # clearance hinge weight
    hinge_sharpness: float = 4.0  # 1/m, softplus steepness
    iters: int = 6
    fd_eps_accel: float = 1e-2
    fd_eps_steer: float = 3e-3
    step0: float = 0.4  # initial line-search step
    max_halvings: int = 8

    def __post_init__(self):
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon and dt must be positive")
        if self.iters < 1 or self.max_halvings < 1:
            raise ValueError("iters and max_halvings must be >= 1")


def baseline_config_for(scenario: Scenario, **extra) -> BaselineConfig:
    """Baseline config sharing the scenario's control timing."""
    kw = {}
    overrides = scenario.mppi_overrides or {}
    for name in ("horizon", "dt"):
        if name in overrides:
            kw[name] = overrides[name]
    kw.update(extra)
    if "horizon" in kw:
        kw["horizon"] = int(kw["horizon"])
    return BaselineConfig(**kw)


@dataclass
class BaselineDiagnostics:
    cost: float
    iterations: int
    backtracks: int
    stalled: bool  # no descent step was accepted this tick
    wall_time: float

    @property
    def cost_best(self) -> float:
        return self.cost


class BaselinePlanner:
    """Soft-constrained MPC over the same vehicle model and route."""

    def __init__(self, scenario: Scenario, config: Optional[BaselineConfig] = None):
        self.scenario = scenario
        self.params = scenario.vehicle_params
        self.config = config or baseline_config_for(scenario)
        self.route: Optional[Route] = None
        self.tracker: Optional[RouteTracker] = None
        self.controls: Optional[np.ndarray] = None  # (T, 2) warm start
        self._seg = 0

    def set_route(self, route: Route):
        self.route = route
        spacing = _tracker_spacing(self.scenario, self.config)
        self.tracker = RouteTracker(route, spacing)
        self._seg = 0
        self.controls = None

    # -- cost -----------------------------------------------------------

    def _window(self, state: VehicleState) -> tuple[int, int]:
        cfg = self.config
        span = cfg.horizon * cfg.dt
        back = 2.0 * self.params.body_length
        fwd = 2.0 * self.params.body_length + 1.3 * max(
            abs(self.scenario.cruise_speed), abs(state.speed)
        ) * span
        n_back = int(math.ceil(back / self.tracker.spacing)) + 1
        n_fwd = int(math.ceil(fwd / self.tracker.spacing)) + 1
        return self._seg - n_back, self._seg + n_fwd + 1

    def _cost_batch(self, states: np.ndarray, window: tuple[int, int]) -> np.ndarray:
        """Tracking + terminal progress + clearance hinge, per rollout.

        states: (B, T+1, 4); row 0 is the shared current state and is
        not charged.
        """
        cfg = self.config
        b, n = states.shape[0], states.shape[1]
        flat = states.reshape(b * n, 4)
        s, e2, ref_head, v_ref = self.tracker.locate(flat[:, :2], *window)
        e_head = geometry.wrap_angle(flat[:, 2] - ref_head)
        e_vel = flat[:, 3] - v_ref
        stage = (e2 + 0.5 * e_head**2 + e_vel**2).reshape(b, n)
        costs = cfg.w_path * cfg.dt * stage[:, 1:].sum(axis=1)
        s_end = s.reshape(b, n)[:, -1]
        costs += cfg.w_path * np.maximum(0.0, self.tracker.end_s - s_end)

        d_safe = self.scenario.rules.d_safe
        k = cfg.hinge_sharpness
        # Cap the query so far obstacles are pruned; beyond the cap the
        # hinge is already indistinguishable from zero.
        cap = d_safe + 6.0 / k
        dist = world.batch_min_obstacle_distance(
            states[:, 1:, :].reshape(-1, 4), self.scenario, cap=cap
        )
        hinge = np.logaddexp(0.0, k * (d_safe - dist)) / k
        costs += cfg.w_soft * cfg.dt * hinge.reshape(b, n - 1).sum(axis=1)
        return costs

    # -- solve ----------------------------------------------------------

    def _init_controls(self, state: VehicleState) -> np.ndarray:
        """Greedy profile-following warm start along the lane reference."""
        cfg = self.config
        tr = self.tracker
        a_max = self.params.max_accel
        s_arr, _, _, _ = tr.locate(np.array([[state.x, state.y]]), 0, tr.n_seg)
        s_pos = float(s_arr[0])
        v = state.speed
        out = np.zeros((cfg.horizon, 2))
        look = tr.fine_gap
        for t in range(cfg.horizon):
            s_look = min(s_pos + max(abs(v) * cfg.dt, look), float(tr.fine_s[-1]))
            v_tgt = float(np.interp(s_look, tr.fine_s, tr.fine_vref))
            accel = float(np.clip((v_tgt - v) / cfg.dt, -a_max, a_max))
            out[t, 0] = accel
            v = float(
                np.clip(v + accel * cfg.dt, self.params.min_speed, self.params.max_speed)
            )
            s_pos = min(s_pos + abs(v) * cfg.dt, float(tr.fine_s[-1]))
        return out

    def _project(self, controls: np.ndarray) -> np.ndarray:
        np.clip(
            controls[:, 0],
            -self.params.max_accel,
            self.params.max_accel,
            out=controls[:, 0],
        )
        np.clip(
            controls[:, 1],
            -self.params.max_steer,
            self.params.max_steer,
            out=controls[:, 1],
        )
        return controls

    def tick(self, state: VehicleState) -> tuple[ControlInput, BaselineDiagnostics]:
        if self.tracker is None:
            raise RuntimeError("no route set")
        t0 = time.perf_counter()
        cfg = self.config
        x0 = state.as_array()

        if self.controls is None:
            u = self._init_controls(state)
            ego_s, _, _, _ = self.tracker.locate(
                np.array([[state.x, state.y]]), 0, self.tracker.n_seg
            )
        else:
            u = np.vstack([self.controls[1:], self.controls[-1:]])
            lo, hi = self._window(state)
            ego_s, _, _, _ = self.tracker.locate(
                np.array([[state.x, state.y]]), lo, hi
            )
        self._seg = self.tracker.segment_of_s(float(ego_s[0]))
        u = self._project(u)
        window = self._window(state)

        t_h = cfg.horizon
        eps = np.array([cfg.fd_eps_accel, cfg.fd_eps_steer])
        backtracks = 0
        accepted = 0
        cost = float(
            self._cost_batch(rollout_batch(x0, u[None], self.params, cfg.dt), window)[0]
        )
        if not math.isfinite(cost):
            # keep the previous (already projected) sequence untouched
            diag = BaselineDiagnostics(
                cost=cost,
                iterations=0,
                backtracks=0,
                stalled=True,
                wall_time=time.perf_counter() - t0,
            )
            self.controls = u
            return ControlInput(float(u[0, 0]), float(u[0, 1])), diag

        for it in range(cfg.iters):
            # central differences over every (step, channel) coordinate
            probes = np.repeat(u[None], 2 * t_h * 2, axis=0)
            idx = np.arange(t_h * 2)
            steps, chans = idx // 2, idx % 2
            probes[2 * idx, steps, chans] += eps[chans]
            probes[2 * idx + 1, steps, chans] -= eps[chans]
            costs = self._cost_batch(
                rollout_batch(x0, probes, self.params, cfg.dt), window
            )
            grad = (costs[2 * idx] - costs[2 * idx + 1]) / (2.0 * eps[chans])
            grad = grad.reshape(t_h, 2)
            if not np.isfinite(grad).all():
                break
            norm = float(np.linalg.norm(grad))
            if norm < 1e-12:
                break

            # one batched evaluation of the whole halving ladder; take the
            # longest step that still descends
            steps_ls = cfg.step0 / norm * 0.5 ** np.arange(cfg.max_halvings)
            cands = np.stack([self._project(u - s * grad) for s in steps_ls])
            costs_ls = self._cost_batch(
                rollout_batch(x0, cands, self.params, cfg.dt), window
            )
            ok = np.isfinite(costs_ls) & (costs_ls < cost)
            if not ok.any():
                backtracks += cfg.max_halvings
                break
            first = int(np.argmax(ok))
            backtracks += first
            u, cost = cands[first], float(costs_ls[first])
            accepted += 1

        self.controls = u
        diag = BaselineDiagnostics(
            cost=cost,
            iterations=accepted,
            backtracks=backtracks,
            stalled=accepted == 0,
            wall_time=time.perf_counter() - t0,
        )
        return ControlInput(float(u[0, 0]), float(u[0, 1])), diag

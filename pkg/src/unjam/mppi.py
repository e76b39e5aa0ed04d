"""Sampling-based path-following controller with rule penalties.

Each tick draws control perturbations around the current nominal
sequence, rolls them through the vehicle model, scores tracking error,
remaining route length, and rule penalties, then blends the samples
with softmax weights. The executed control is the first element of the
blended sequence; the sequence is then shifted one step.

Rule penalties are scored on the rollout's future states (from step 1):
the shared current state is not controllable, and including it would
saturate every sample identically the moment a rule margin is crossed,
erasing the ranking exactly when it matters most. Robustness mode is
the default for the same reason: once inside a margin, indicator
penalties are flat while max(0, -rho) still pushes the blend outward.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry
from .astar import resample
from .route import Route
from .stl.rules import (
    RuleContext,
    extract_channels_batch,
    formula_channels,
)
from .vehicle import (
    STOPPED_SPEED,
    ControlInput,
    Trajectory,
    VehicleState,
    rollout_batch,
)
from .world import Scenario


class PlanningError(RuntimeError):
    """No usable rollout this tick (all sampled costs non-finite)."""


@dataclass(frozen=True)
class MppiConfig:
    horizon: int = 50  # steps of dt
    samples: int = 1000
    sigma_vel: float = 0.12  # per-step speed noise, m/s
    sigma_steer: float = 0.35  # rad
    lam: float = 0.5  # softmax temperature
    w_path: float = 100.0
    dt: float = 0.1
    stl_mode: str = "robustness"  # or "indicator"
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1 or self.samples < 1:
            raise ValueError("horizon and samples must be >= 1")
        if self.sigma_vel <= 0 or self.sigma_steer <= 0:
            raise ValueError("noise scales must be positive")
        if self.lam <= 0 or self.dt <= 0:
            raise ValueError("lam and dt must be positive")
        if self.stl_mode not in ("indicator", "robustness"):
            raise ValueError("stl_mode must be 'indicator' or 'robustness'")


def mppi_config_for(scenario: Scenario, **extra) -> MppiConfig:
    kw = dict(scenario.mppi_overrides or {})
    kw.update(extra)
    for name in ("horizon", "samples", "seed"):
        if name in kw:
            kw[name] = int(kw[name])
    return MppiConfig(**kw)


def sample_controls(
    rng: np.random.Generator, nominal: np.ndarray, config: MppiConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Perturbed control sequences around the nominal.

    Speed noise is drawn per step in velocity units and divided by dt to
    act on the acceleration channel. Controls are not clamped here; the
    vehicle model saturates them, which keeps the exploration honest at
    the actuation limits.

    Returns:
        (controls, noise): (K, T, 2) each, controls = nominal + noise.
    """
    k, t = config.samples, config.horizon
    eps = rng.normal(size=(k, t, 2))
    eps[:, :, 0] *= config.sigma_vel / config.dt
    eps[:, :, 1] *= config.sigma_steer
    # Sample 0 carries zero noise so the unperturbed nominal is always a
    # candidate. Near standstill the cost surface is almost symmetric in
    # the first-step perturbation, and without this anchor the executed
    # control is a coin flip that can jitter in place for seconds.
    eps[0] = 0.0
    return nominal[None, :, :] + eps, eps


def compute_weights(costs: np.ndarray, lam: float) -> np.ndarray:
    """Min-shifted softmax weights; non-finite costs get zero weight."""
    costs = np.asarray(costs, dtype=float)
    finite = np.isfinite(costs)
    if not finite.any():
        raise PlanningError("every sampled rollout had non-finite cost")
    shifted = costs - costs[finite].min()
    w = np.zeros_like(costs)
    w[finite] = np.exp(-shifted[finite] / lam)
    return w / w.sum()


class RouteTracker:
    """Window-limited projection of rollout points onto the route.

    Works on a coarsened copy of the route polyline: straight-lane
    routes lose nothing, and on recovery arcs the chord error stays far
    below the tracking weight's noise floor while the projection cost
    drops by an order of magnitude.
    """

    def __init__(self, route: Route, spacing: float):
        path = route.path
        if len(path) < 2:
            raise ValueError("route path needs >= 2 poses")
        gaps = np.diff(path.cumulative_s)
        coarse_spacing = max(spacing, 2.0 * float(np.median(gaps)))
        coarse = resample(path, coarse_spacing)
        self.s = coarse.cumulative_s
        self.xy = coarse.poses[:, :2]
        self.head = coarse.poses[:, 2]
        self.directions = coarse.directions
        self.end_s = route.end_s
        self.d = np.diff(self.xy, axis=0)  # (M-1, 2)
        self.seg_len = np.linalg.norm(self.d, axis=1)
        self.len2 = np.maximum(self.seg_len**2, 1e-18)
        self.dhead = geometry.wrap_angle(np.diff(self.head))
        self.n_seg = self.d.shape[0]
        self.spacing = max(float(np.median(self.seg_len)), 1e-9)
        # The speed reference is read off the full-resolution profile at
        # the projected s. Node-sampled values are useless here: a short
        # reversing leg ramps 0 -> peak -> 0 between coarse nodes, and
        # sampling at its endpoints erases the whole maneuver.
        self.fine_s = path.cumulative_s
        self.fine_vref = route.v_ref
        self.fine_gap = max(float(np.median(gaps)), 1e-9)

    def locate(self, pts: np.ndarray, lo: int, hi: int):
        """Project points onto segments [lo, hi).

        Returns (s, e_sq, ref_heading, v_ref) arrays over the points.
        """
        lo = max(0, min(lo, self.n_seg - 1))
        hi = max(lo + 1, min(hi, self.n_seg))
        a = self.xy[lo:hi]
        d = self.d[lo:hi]
        rel = pts[:, None, :] - a[None, :, :]
        t = np.clip(
            (rel[:, :, 0] * d[:, 0] + rel[:, :, 1] * d[:, 1]) / self.len2[lo:hi],
            0.0,
            1.0,
        )
        ex = rel[:, :, 0] - t * d[:, 0]
        ey = rel[:, :, 1] - t * d[:, 1]
        e2 = ex * ex + ey * ey
        j = np.argmin(e2, axis=1)
        rows = np.arange(pts.shape[0])
        tj = t[rows, j]
        seg = lo + j
        s = self.s[seg] + tj * self.seg_len[seg]
        head = self.head[seg] + tj * self.dhead[seg]
        vref = np.interp(s, self.fine_s, self.fine_vref)
        return s, e2[rows, j], head, vref

    def segment_of_s(self, s: float) -> int:
        return int(np.clip(np.searchsorted(self.s, s) - 1, 0, self.n_seg - 1))

    def curvature(self, seg: np.ndarray) -> np.ndarray:
        seg = np.clip(seg, 0, self.n_seg - 1)
        return self.dhead[seg] / np.maximum(self.seg_len[seg], 1e-9)


def active_rules(rules: list, ctx: RuleContext) -> list:
    """Rules that should shape rollout costs right now.

    Episode-only rules never enter; the stop rule drops out once the
    stop is discharged (its channel is vacuously true) or already
    missed (penalizing the aftermath would just distort control).
    """
    out = []
    for r in rules:
        if r.episode_only:
            continue
        needs = formula_channels(r.rollout_formula)
        if "stop_ok" in needs and (ctx.stop_done or ctx.stop_violated):
            continue
        out.append(r)
    return out


def score_rollouts(
    states: np.ndarray,
    tracker: RouteTracker,
    window: tuple[int, int],
    scenario: Scenario,
    rules: list,
    ctx: RuleContext,
    config: MppiConfig,
):
    """Cost of each rollout plus per-rule violation masks.

    Args:
        states: (K, T+1, 4); row 0 of each rollout is the shared
            current state and is excluded from rule scoring.

    Returns:
        (costs (K,), rule_breakdown dict name -> (violated (K,), penalty (K,))).
    """
    k, n = states.shape[0], states.shape[1]
    lo, hi = window
    flat = states.reshape(k * n, 4)
    s, e2, ref_head, v_ref = tracker.locate(flat[:, :2], lo, hi)
    e_head = geometry.wrap_angle(flat[:, 2] - ref_head)
    e_vel = flat[:, 3] - v_ref

    # Velocity error carries full weight: the terminal progress reward
    # has slope w_path per meter, and a lighter coefficient lets it pay
    # for sustained overspeed until the actuator box absorbs the nominal.
    stage = (e2 + 0.5 * e_head**2 + e_vel**2).reshape(k, n)
    costs = config.w_path * config.dt * stage[:, 1:].sum(axis=1)
    s_end = s.reshape(k, n)[:, -1]
    costs += config.w_path * np.maximum(0.0, tracker.end_s - s_end)

    breakdown = {}
    rules_now = active_rules(rules, ctx)
    if rules_now:
        needed = set()
        for r in rules_now:
            needed |= formula_channels(r.rollout_formula)
        channels = extract_channels_batch(
            states[:, 1:, :],
            scenario,
            ctx,
            needed,
            dist_cap=scenario.rules.d_safe + 1.0,
        )
        for r in rules_now:
            rho = r.rollout_formula.robustness_signal(channels, config.dt)[:, 0]
            bad = rho < 0.0
            if config.stl_mode == "indicator":
                penalty = r.weight * bad
            else:
                penalty = r.weight * np.where(bad, -rho, 0.0)
            costs = costs + penalty
            breakdown[r.name] = (bad, penalty)
    return costs, breakdown


def trajectory_cost(
    trajectory: Trajectory,
    route: Route,
    scenario: Scenario,
    rules: list,
    ctx: RuleContext,
    config: MppiConfig,
) -> tuple[float, dict]:
    """Score a single rollout; returns (J, cost breakdown).

    Shares the batched scoring path with the planner, so the value is
    exactly what the planner would assign this trajectory.
    """
    if len(route) < 2:
        raise ValueError("empty reference route")
    tracker = RouteTracker(route, _tracker_spacing(scenario, config))
    states = trajectory.as_array()[None, :, :]
    costs, breakdown = score_rollouts(
        states, tracker, (0, tracker.n_seg), scenario, rules, ctx, config
    )
    stage_and_terminal = float(costs[0]) - sum(
        float(pen[0]) for _, pen in breakdown.values()
    )
    parts = {
        "stage_and_terminal": stage_and_terminal,
        "rules": {name: float(pen[0]) for name, (bad, pen) in breakdown.items()},
    }
    return float(costs[0]), parts


def _tracker_spacing(scenario: Scenario, config: MppiConfig) -> float:
    reach = abs(scenario.cruise_speed) * config.horizon * config.dt
    return min(2.0, max(0.15 * reach, 1e-3))


@dataclass
class MppiDiagnostics:
    costs: np.ndarray  # (K,) per-sample cost
    weights: np.ndarray  # (K,) softmax weights, sum 1
    ess: float  # effective sample size 1 / sum(w^2)
    violated: tuple  # rule names the lowest-cost sample violates
    wall_time: float

    @property
    def cost_best(self) -> float:
        finite = self.costs[np.isfinite(self.costs)]
        return float(finite.min()) if finite.size else math.inf

    @property
    def weight_sum(self) -> float:
        return float(self.weights.sum())


class MppiPlanner:
    """Receding-horizon sampler bound to one scenario episode."""

    def __init__(
        self,
        scenario: Scenario,
        rules: list,
        ctx: RuleContext,
        config: Optional[MppiConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        self.scenario = scenario
        self.params = scenario.vehicle_params
        self.rules = rules
        self.ctx = ctx
        self.config = config or mppi_config_for(scenario)
        self.rng = rng or np.random.Generator(np.random.Philox(self.config.seed))
        self.route: Optional[Route] = None
        self.tracker: Optional[RouteTracker] = None
        self.nominal = None
        self._seg = 0

    def set_route(self, route: Route):
        """Switch the tracked reference; the nominal sequence re-seeds
        from the route's speed profile on the next tick."""
        self.route = route
        self.tracker = RouteTracker(route, _tracker_spacing(self.scenario, self.config))
        self._seg = 0
        self.nominal = None  # rebuilt on first tick at the actual state

    def refresh_profile(self):
        """Re-read v_ref/end_s after the route was reprofiled in place."""
        if self.route is not None:
            self.set_route(self.route)

    def _comfort_accel(self) -> float:
        return min(
            self.params.max_accel,
            0.995 * self.params.max_speed_change_per_step / self.config.dt,
        )

    def _init_nominal(self, state: VehicleState) -> np.ndarray:
        """Open-loop profile-following controls: track v_ref along the
        route at the reference curvature (avoids a cold-start stall)."""
        cfg = self.config
        tr = self.tracker
        a_max = self._comfort_accel()
        s_arr, _, _, _ = tr.locate(np.array([[state.x, state.y]]), 0, tr.n_seg)
        s_pos = float(s_arr[0])
        v = state.speed
        nominal = np.zeros((cfg.horizon, 2))
        end = float(tr.fine_s[-1])
        look = tr.fine_gap
        # The virtual position marches at no less than creep speed. The
        # profile is zero at every rest point, and a plan that only moves
        # as fast as the profile it is reading gets trapped there; the
        # controls emitted across the dead zone are what carry the plan
        # through a cusp within the horizon.
        creep = 0.25 * abs(self.scenario.cruise_speed)
        for t in range(cfg.horizon):
            s_look = min(s_pos + max(abs(v) * cfg.dt, look), end)
            seg = tr.segment_of_s(s_look)
            v_tgt = float(np.interp(s_look, tr.fine_s, tr.fine_vref))
            accel = np.clip((v_tgt - v) / cfg.dt, -a_max, a_max)
            kappa = float(tr.curvature(np.array([seg]))[0])
            direction = 1.0 if tr.directions[min(seg + 1, len(tr.directions) - 1)] >= 0 else -1.0
            steer = math.atan(self.params.wheelbase * kappa) * direction
            nominal[t, 0] = accel
            nominal[t, 1] = np.clip(steer, -self.params.max_steer, self.params.max_steer)
            v = float(
                np.clip(v + accel * cfg.dt, self.params.min_speed, self.params.max_speed)
            )
            s_pos = min(s_pos + max(abs(v), creep) * cfg.dt, end)
        return nominal

    def _window(self, state: VehicleState) -> tuple[int, int]:
        cfg = self.config
        p = self.params
        span = cfg.horizon * cfg.dt
        back = 2.0 * p.body_length + 0.5 * abs(p.min_speed) * span
        fwd = 2.0 * p.body_length + 1.3 * max(
            abs(self.scenario.cruise_speed), abs(state.speed)
        ) * span
        n_back = int(math.ceil(back / self.tracker.spacing)) + 1
        n_fwd = int(math.ceil(fwd / self.tracker.spacing)) + 1
        return self._seg - n_back, self._seg + n_fwd + 1

    def tick(self, state: VehicleState) -> tuple[ControlInput, MppiDiagnostics]:
        """One control step: sample, score, blend, shift."""
        if self.tracker is None:
            raise PlanningError("no route set")
        t0 = time.perf_counter()
        cfg = self.config

        if self.nominal is None:
            self.nominal = self._init_nominal(state)
            ego_s, _, _, _ = self.tracker.locate(
                np.array([[state.x, state.y]]), 0, self.tracker.n_seg
            )
        else:
            lo, hi = self._window(state)
            ego_s, _, _, _ = self.tracker.locate(np.array([[state.x, state.y]]), lo, hi)
        self._seg = self.tracker.segment_of_s(float(ego_s[0]))

        controls, _ = sample_controls(self.rng, self.nominal, cfg)
        states = rollout_batch(state.as_array(), controls, self.params, cfg.dt)
        costs, breakdown = score_rollouts(
            states,
            self.tracker,
            self._window(state),
            self.scenario,
            self.rules,
            self.ctx,
            cfg,
        )

        weights = compute_weights(costs, cfg.lam)
        blended = np.einsum("k,ktj->tj", weights, controls)
        # Keep the nominal inside the realizable box. Once it drifts past
        # the saturation limits every perturbed sample clips to the same
        # executed control and the weighting loses its authority.
        a_max = self._comfort_accel()
        np.clip(blended[:, 0], -a_max, a_max, out=blended[:, 0])
        np.clip(
            blended[:, 1],
            -self.params.max_steer,
            self.params.max_steer,
            out=blended[:, 1],
        )
        u = ControlInput(float(blended[0, 0]), float(blended[0, 1]))
        self.nominal = np.vstack([blended[1:], blended[-1:]])

        # Standstill latch at an active stop wall: the blended first
        # accel keeps a noise floor of roughly one sigma, so the sampler
        # alone cannot hold |v| below the stopped threshold for a
        # multi-second stop. Once the vehicle is nearly at rest in the
        # wall band, brake it to exactly zero and keep it there; the
        # wall is discharged or replaced by whoever owns the route.
        if self.route.stop_s is not None:
            latch_speed = max(
                2.0 * STOPPED_SPEED, 0.2 * abs(self.scenario.cruise_speed)
            )
            band = 1.5 * self.scenario.rules.d_safe
            if (
                abs(state.speed) <= latch_speed
                and float(ego_s[0]) >= self.route.stop_s - band
            ):
                u = ControlInput(
                    float(np.clip(-state.speed / cfg.dt, -a_max, a_max)), 0.0
                )

        best = int(np.argmin(np.where(np.isfinite(costs), costs, np.inf)))
        diag = MppiDiagnostics(
            costs=costs,
            weights=weights,
            ess=float(1.0 / np.sum(weights**2)),
            violated=tuple(
                name for name, (bad, _) in breakdown.items() if bad[best]
            ),
            wall_time=time.perf_counter() - t0,
        )
        return u, diag

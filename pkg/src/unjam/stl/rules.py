"""Traffic-rule formulas and the channel extraction that feeds them.

The rule set covers: safety distance, hard collision, lane keeping,
oncoming-lane discipline, the intersection stop, deadlock exit liveness,
and the velocity-change comfort bound.

Two of the rules are written with a weak-until encoding
``G(phi) | (phi U psi)`` rather than a bare ``phi U psi``: under
trace-end truncation a strong Until fails every trace in which psi never
needs to happen (an episode that never approaches the intersection, a
suffix after the pass where the oncoming window is occupied), penalizing
exactly the compliant behavior. The weak form keeps the intended reading:
either the guarded action never happens, or it happens after the release
condition.

The stop rule additionally needs cross-tick memory: a 3 s hold cannot be
witnessed inside a 5 s rollout that starts mid-hold. RuleContext carries
the executed hold progress into the rollouts through the derived
``stop_ok`` channel; the episode monitor still checks the undoctored
formula over the full logged trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .. import world as world_mod
from ..geometry import project_to_polyline, poses_rect_signed
from ..vehicle import STOPPED_SPEED, Trajectory, VehicleState, footprint_poses
from ..world import Scenario, ScenarioError
from .formula import Formula, SignalTrace
from .parser import parse

# channels that only make sense when the scenario has an intersection zone
_ZONE_CHANNELS = {"crossing", "stop_ok"}

CHANNEL_NAMES = (
    "dist",
    "in_corridor",
    "on_oncoming",
    "oncoming_free",
    "crossing",
    "stopped",
    "stop_ok",
    "dvel",
    "speed",
    "progress",
    "exit_deadlock",
)


@dataclass
class RuleInstance:
    """One instantiated traffic rule.

    ``formula`` is what the episode monitor checks; ``rollout_formula``
    is what the controller penalizes on horizon-truncated rollouts (they
    differ only for the stop rule). Rules flagged ``episode_only`` are
    excluded from rollout costs entirely.
    """

    name: str
    formula: Formula
    weight: float
    params: dict = field(default_factory=dict)
    rollout_formula: Optional[Formula] = None
    episode_only: bool = False

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("rule weight must be >= 0")
        if self.rollout_formula is None:
            self.rollout_formula = self.formula


class RuleContext:
    """Episode state the rule channels depend on.

    Tracks the executed stop-hold progress for the intersection rule and
    the active blockage exit threshold for the deadlock-exit channel.
    The route here is the original lane route; progress, the oncoming
    window and the exit predicate are all measured along it.
    """

    def __init__(self, scenario: Scenario, route_points: np.ndarray, dt: float = 0.1):
        self.scenario = scenario
        self.route_points = np.asarray(route_points, dtype=float)
        if self.route_points.ndim != 2 or self.route_points.shape[0] < 2:
            raise ValueError("route needs >= 2 points")
        self.dt = float(dt)
        self.needed_stop_samples = (
            int(math.floor(scenario.rules.stop_hold / dt + 1e-9)) + 1
        )
        self.stop_hold_elapsed = 0
        self.stop_done = scenario.intersection is None
        self.stop_violated = False
        self.exit_s: Optional[float] = None
        self._ego_lanes = [
            ln for ln in scenario.lanes if ln.direction == world_mod.EGO_DIRECTION
        ]
        self._oncoming_lanes = scenario.oncoming_lanes()
        self.obstacle_intervals = world_mod.obstacle_route_intervals(
            scenario, self.route_points
        )
        self.update(scenario.ego_start)

    def update(self, state: VehicleState):
        """Advance the executed-trace latches by one simulated step."""
        stopped = abs(state.speed) < STOPPED_SPEED
        self.stop_hold_elapsed = self.stop_hold_elapsed + 1 if stopped else 0
        if self.scenario.intersection is None:
            return
        pose = footprint_poses(state.as_array()[None, :], self.scenario.vehicle_params)
        crossing = bool(
            poses_rect_signed(
                pose,
                self.scenario.vehicle_params.body_length,
                self.scenario.vehicle_params.body_width,
                self.scenario.intersection.rect,
            )[0]
            < 0.0
        )
        if crossing and not self.stop_done:
            self.stop_violated = True
        if not crossing and self.stop_hold_elapsed >= self.needed_stop_samples:
            self.stop_done = True

    def set_exit(self, exit_s: Optional[float]):
        self.exit_s = exit_s


def build_rule_set(scenario: Scenario, rule_file_text: str = None) -> list:
    """Instantiate the traffic rules that apply to a scenario.

    Args:
        scenario: provides rule parameters and which rules make sense
            (no stop rule without an intersection, no oncoming rule
            without an oncoming lane).
        rule_file_text: optional custom rule file (see parse_rule_file);
            replaces the builtin set when given.

    Returns:
        List of RuleInstance.
    """
    if rule_file_text is not None:
        rules = parse_rule_file(rule_file_text)
        _check_zone_channels(rules, scenario)
        return rules

    p = scenario.rules
    dv_max = p.dv_max
    if dv_max is None:
        dv_max = scenario.vehicle_params.max_speed_change_per_step

    def weight(name):
        return p.weights.get(name, p.weight)

    def rule(name, text, params, rollout_text=None, episode_only=False):
        return RuleInstance(
            name=name,
            formula=parse(text),
            weight=weight(name),
            params=params,
            rollout_formula=parse(rollout_text) if rollout_text else None,
            episode_only=episode_only,
        )

    rules = [
        rule("safe_distance", f"G(dist >= {p.d_safe!r})", {"d_safe": p.d_safe}),
        rule("no_collision", "G(dist > 0.0)", {}),
        rule("stay_in_lane", "G(in_corridor >= 0.5)", {}),
    ]
    if scenario.oncoming_lanes():
        rules.append(
            rule(
                "oncoming_lane",
                "G(G(on_oncoming <= 0.5)"
                " | ((on_oncoming <= 0.5) U (oncoming_free >= 0.5)))",
                {"lookahead": p.oncoming_lookahead},
            )
        )
    if scenario.intersection is not None:
        hold = float(p.stop_hold)
        rules.append(
            rule(
                "intersection_stop",
                f"(G(crossing <= 0.5)"
                f" | ((crossing <= 0.5) U G[0.0,{hold!r}](stopped >= 0.5)))",
                {"stop_hold": hold},
                rollout_text="(G(crossing <= 0.5)"
                " | ((crossing <= 0.5) U (stop_ok >= 0.5)))",
            )
        )
    rules.append(
        rule(
            "exit_deadlock",
            "F(exit_deadlock >= 0.5)",
            {},
            episode_only=True,
        )
    )
    # monitored on the executed trace only: the executor clamps commanded
    # accel to the per-step speed-change limit, and inside rollouts the
    # bound would just score the sampler's own noise realizations
    rules.append(
        rule(
            "velocity_change",
            f"G(dvel <= {float(dv_max)!r})",
            {"dv_max": dv_max},
            episode_only=True,
        )
    )
    return rules


def parse_rule_file(text: str) -> list:
    """Parse a custom rule file: `name weight formula` per line, # comments."""
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 2)
        if len(parts) != 3:
            raise ScenarioError(
                f"rule file line {lineno}: expected 'name weight formula'"
            )
        name, weight_text, formula_text = parts
        try:
            weight = float(weight_text)
        except ValueError:
            raise ScenarioError(f"rule file line {lineno}: bad weight {weight_text!r}")
        rules.append(RuleInstance(name, parse(formula_text), weight))
    if not rules:
        raise ScenarioError("rule file defines no rules")
    return rules


def formula_channels(formula: Formula) -> set:
    """All channel names an AST references."""
    from .formula import Atom

    found = set()
    stack = [formula]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom):
            found.add(node.channel)
        for attr in ("child", "left", "right"):
            if hasattr(node, attr):
                stack.append(getattr(node, attr))
    return found


def _check_zone_channels(rules, scenario):
    if scenario.intersection is not None:
        return
    for r in rules:
        used = formula_channels(r.formula) | formula_channels(r.rollout_formula)
        bad = used & _ZONE_CHANNELS
        if bad:
            raise ScenarioError(
                f"rule {r.name!r} uses {sorted(bad)} but the scenario has no"
                " intersection zone"
            )


def extract_channels_batch(
    states: np.ndarray,
    scenario: Scenario,
    ctx: RuleContext,
    needed: set = None,
    dist_cap: float = None,
) -> dict:
    """Rule channels for a batch of rollouts.

    Args:
        states: (K, N, 4) array of [x, y, heading, speed] rows.
        scenario: the world.
        ctx: episode context (stop latches, exit threshold, route).
        needed: channel names to compute, None for all of CHANNEL_NAMES.
            Channels a requested one depends on are added automatically.
        dist_cap: report obstacle clearance as min(dist, cap). Both dist
            atoms are lower bounds, so any cap above d_safe leaves every
            robustness sign and every max(0, -rho) penalty unchanged
            while letting the distance kernel prune far obstacles.

    Returns:
        dict channel name -> (K, N) float array.
    """
    k, n, _ = states.shape
    flat = states.reshape(k * n, 4)
    params = scenario.vehicle_params
    want = set(CHANNEL_NAMES) if needed is None else set(needed)
    if "stop_ok" in want:
        want.add("stopped")
    if "oncoming_free" in want or "exit_deadlock" in want:
        want.add("progress")

    ch = {}
    if "dist" in want:
        cap = world_mod.NO_OBSTACLE_DISTANCE if dist_cap is None else float(dist_cap)
        ch["dist"] = world_mod.batch_min_obstacle_distance(
            flat, scenario, cap=cap
        ).reshape(k, n)
    if "in_corridor" in want:
        # the full footprint must stay on the paved union, matching the
        # harness's road-departure check
        ch["in_corridor"] = (
            world_mod.batch_road_contained(flat, scenario, params)
            .reshape(k, n)
            .astype(float)
        )
    centers = None
    if want & {"on_oncoming", "exit_deadlock", "crossing"}:
        fp = footprint_poses(flat, params)
        centers = fp[:, :2]
    if "on_oncoming" in want:
        if ctx._oncoming_lanes:
            on_onc = world_mod.batch_in_corridor(centers, ctx._oncoming_lanes)
        else:
            on_onc = np.zeros(k * n, dtype=bool)
        ch["on_oncoming"] = on_onc.reshape(k, n).astype(float)

    speed = flat[:, 3].reshape(k, n)
    if "speed" in want:
        ch["speed"] = speed.copy()
    if "stopped" in want:
        ch["stopped"] = (np.abs(speed) < STOPPED_SPEED).astype(float)
    if "dvel" in want:
        dvel = np.zeros((k, n))
        if n > 1:
            dvel[:, 1:] = np.abs(np.diff(speed, axis=1))
        ch["dvel"] = dvel

    if "crossing" in want:
        if scenario.intersection is not None:
            sd = poses_rect_signed(
                fp,
                params.body_length,
                params.body_width,
                scenario.intersection.rect,
            )
            ch["crossing"] = (sd < 0.0).reshape(k, n).astype(float)
        else:
            ch["crossing"] = np.zeros((k, n))
    if "stop_ok" in want:
        ch["stop_ok"] = _stop_ok_channel(ch["stopped"], ctx)

    if "progress" in want:
        s, _, _ = project_to_polyline(flat[:, :2], ctx.route_points)
        s = s.reshape(k, n)
        ch["progress"] = s

    if "oncoming_free" in want:
        s = ch["progress"]
        free = np.ones((k, n), dtype=bool)
        look = scenario.rules.oncoming_lookahead
        for s_min, s_max, overlaps in ctx.obstacle_intervals:
            if overlaps:
                free &= ~((s_max >= s) & (s_min <= s + look))
        ch["oncoming_free"] = free.astype(float)

    if "exit_deadlock" in want:
        s = ch["progress"]
        if ctx.exit_s is None:
            ch["exit_deadlock"] = np.ones((k, n))
        else:
            if ctx._ego_lanes:
                own = world_mod.batch_in_corridor(centers, ctx._ego_lanes).reshape(k, n)
            else:
                own = np.ones((k, n), dtype=bool)
            ch["exit_deadlock"] = ((s >= ctx.exit_s) & own).astype(float)
    return ch


def _stop_ok_channel(stopped: np.ndarray, ctx: RuleContext) -> np.ndarray:
    """Per-sample flag: the stop-hold requirement is discharged by now.

    Consecutive stopped samples are counted through the trace, seeded
    with the executed hold length ctx.stop_hold_elapsed; the trace is
    taken to start one step after the context state, so a stopped first
    sample extends the executed run. Once the count reaches the required
    hold the flag latches on for the rest of that trace.
    """
    k, n = stopped.shape
    if ctx.stop_done:
        return np.ones((k, n))
    needed = ctx.needed_stop_samples
    ok = np.zeros((k, n))
    count = np.full(k, float(ctx.stop_hold_elapsed))
    done = np.zeros(k, dtype=bool)
    for t in range(n):
        count = np.where(stopped[:, t] > 0.5, count + 1.0, 0.0)
        done = done | (count >= needed)
        ok[:, t] = done
    return ok


def extract_channels(
    trajectory: Trajectory, scenario: Scenario, ctx: RuleContext
) -> SignalTrace:
    """SignalTrace of all rule channels for a single trajectory."""
    states = trajectory.as_array()[None, :, :]
    batch = extract_channels_batch(states, scenario, ctx)
    return SignalTrace(trajectory.dt, {name: arr[0] for name, arr in batch.items()})

"""Closed-loop episode runner, rule monitor, and comparison runs.

run_episode wires a scenario to a planner (with the recovery supervisor
for the sampling planner, bare for the baseline), steps the vehicle
with the planner's first control each tick, and scores the executed
trace against the full rule set afterwards. compare sweeps scenarios,
planners, and seeds and writes the per-episode table plus traces;
everything written is reproducible except wall-clock timings, which
stay out of the files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import world
from .baseline import BaselinePlanner, baseline_config_for
from .deadlock import RecoverySupervisor
from .grid import grid_config_for
from .mppi import MppiPlanner, mppi_config_for
from .route import initial_route
from .stl.rules import RuleContext, build_rule_set, extract_channels_batch, formula_channels
from .vehicle import ControlInput, Trajectory, step
from .world import Scenario

PLANNERS = ("stl-mppi", "soft-mpc")


def subseed(module: str, seed: int) -> int:
    """Stable per-module sub-seed from one run seed.

    Hashing the module name in keeps streams decorrelated if another
    consumer of randomness is ever added with the same run seed.
    """
    digest = hashlib.blake2b(f"{module}:{seed}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass
class EpisodeResult:
    scenario_name: str
    planner_name: str
    seed: int
    outcome: str  # goal | collision | failed | timeout
    reason: str
    trajectory: Trajectory
    phases: list  # phase name per state
    phase_log: list  # (t, phase, note)
    metrics: dict
    rule_report: dict = field(default_factory=dict)
    references: list = field(default_factory=list)  # (N, 2) reference polylines

    @property
    def ok(self) -> bool:
        return self.outcome == "goal"


def route_spacing(scenario: Scenario) -> float:
    """Reference resample step, tied to the fine grid so scaled-down
    scenarios keep proportional resolution."""
    return min(0.25, 2.0 * grid_config_for(scenario).fine_cell)


def monitor_episode(
    trajectory: Trajectory,
    scenario: Scenario,
    ctx: RuleContext,
    rules: list,
) -> dict:
    """Judge the executed trace against every rule's episode formula.

    Uses the context as it stands at episode end (stop latches, exit
    thresholds), so the verdict matches what actually happened rather
    than a mid-episode snapshot.

    Returns:
        name -> {"satisfied": bool, "robustness": float, "weight": float}
    """
    states = trajectory.as_array()[None, :, :]
    needed = set()
    for r in rules:
        needed |= formula_channels(r.formula)
    channels = extract_channels_batch(states, scenario, ctx, needed)
    report = {}
    for r in rules:
        rho = float(r.formula.robustness_signal(channels, trajectory.dt)[0, 0])
        report[r.name] = {
            "satisfied": bool(rho >= 0.0),
            "robustness": rho,
            "weight": float(r.weight),
        }
    return report


def _planner_config(scenario, planner: str, seed: int, overrides: Optional[dict]):
    overrides = dict(overrides or {})
    if planner == "stl-mppi":
        overrides.setdefault("seed", subseed("mppi", seed))
        return mppi_config_for(scenario, **overrides)
    return baseline_config_for(scenario, **overrides)


def run_episode(
    scenario: Scenario,
    planner: str = "stl-mppi",
    seed: int = 0,
    max_steps: int = 1200,
    rule_file_text: Optional[str] = None,
    overrides: Optional[dict] = None,
) -> EpisodeResult:
    """Run one closed-loop episode to goal, collision, failure, or timeout.

    The applied actuation each tick is exactly the planner's first
    control; the harness adds no filtering of its own. Tick wall times
    cover planner.tick only.
    """
    if planner not in PLANNERS:
        raise ValueError(f"unknown planner {planner!r}; expected one of {PLANNERS}")
    spacing = route_spacing(scenario)
    rules = build_rule_set(scenario, rule_file_text)
    cfg = _planner_config(scenario, planner, seed, overrides)
    dt = cfg.dt

    if planner == "stl-mppi":
        route, route_points = initial_route(scenario, spacing)
        ctx = RuleContext(scenario, route_points, dt=dt)
        pl = MppiPlanner(scenario, rules, ctx, cfg)
        sup = RecoverySupervisor(scenario, pl, ctx, route, route_points)
    else:
        route, route_points = initial_route(scenario, spacing, stop_shaping=False)
        ctx = RuleContext(scenario, route_points, dt=dt)
        pl = BaselinePlanner(scenario, cfg)
        pl.set_route(route)
        sup = None

    state = scenario.ego_start
    states = [state]
    controls: list = []
    phases = [sup.phase if sup else "Nominal"]
    tick_s: list = []
    min_clearance = float(world.min_obstacle_distance(state, scenario))
    outcome, reason = "timeout", f"no terminal event in {max_steps} steps"
    t = 0.0

    for k in range(max_steps):
        t = k * dt
        if scenario.goal.contains(state):
            outcome, reason = "goal", "goal region reached"
            break
        if sup is not None:
            sup.pre_tick(t, state)
            if sup.phase == "Failed":
                outcome, reason = "failed", sup.failed_reason
                break
        t0 = time.perf_counter()
        u, _diag = pl.tick(state)
        tick_s.append(time.perf_counter() - t0)
        state = step(state, u, scenario.vehicle_params, dt)
        ctx.update(state)
        states.append(state)
        controls.append(u)
        phases.append(sup.phase if sup else "Nominal")
        min_clearance = min(
            min_clearance, float(world.min_obstacle_distance(state, scenario))
        )
        if world.in_collision(state, scenario):
            outcome, reason = "collision", "footprint overlaps an obstacle"
            break
    else:
        if sup is not None:
            sup.fail(t, "step budget exceeded")

    trajectory = Trajectory(states, controls, dt)
    phase_log = list(sup.phase_log) if sup else [(0.0, "Nominal", "episode start")]

    deadlock_t = next((t0 for t0, p, _ in phase_log if p == "DeadlockDetected"), None)
    recovered_t = next((t0 for t0, p, _ in phase_log if p == "Recovered"), None)
    xy = trajectory.as_array()[:, :2]
    arr_ticks = np.asarray(tick_s) if tick_s else np.zeros(1)
    metrics = {
        "reached_goal": outcome == "goal",
        "collided": outcome == "collision",
        "sim_time": round((len(states) - 1) * dt, 9),
        "min_clearance": min_clearance,
        "path_length": float(np.linalg.norm(np.diff(xy, axis=0), axis=1).sum()),
        "replans": sup.replans if sup else 0,
        "time_to_clear": (
            round(recovered_t - deadlock_t, 9)
            if deadlock_t is not None and recovered_t is not None
            else None
        ),
        # wall-clock block: not reproducible, excluded from written artifacts
        "tick_ms_mean": float(arr_ticks.mean() * 1e3),
        "tick_ms_p95": float(np.percentile(arr_ticks, 95) * 1e3),
        "tick_ms_max": float(arr_ticks.max() * 1e3),
    }

    if sup is not None:
        references = [p.poses[:, :2].copy() for p in sup.installed_paths]
    else:
        references = [route.path.poses[:, :2].copy()]

    result = EpisodeResult(
        scenario_name=scenario.name,
        planner_name=planner,
        seed=seed,
        outcome=outcome,
        reason=reason,
        trajectory=trajectory,
        phases=phases,
        phase_log=phase_log,
        metrics=metrics,
        references=references,
    )
    result.rule_report = monitor_episode(trajectory, scenario, ctx, rules)
    return result


_TIMING_KEYS = ("tick_ms_mean", "tick_ms_p95", "tick_ms_max")


def _row_of(result: EpisodeResult, rule_names: list) -> dict:
    row = {
        "scenario": result.scenario_name,
        "planner": result.planner_name,
        "seed": result.seed,
        "outcome": result.outcome,
    }
    for key, value in result.metrics.items():
        if key in _TIMING_KEYS:
            continue
        row[key] = value
    for name in rule_names:
        entry = result.rule_report.get(name)
        row[f"rule_{name}"] = "" if entry is None else int(entry["satisfied"])
        row[f"rho_{name}"] = (
            "" if entry is None else round(entry["robustness"], 9)
        )
    return row


def write_episode_trace(result: EpisodeResult, scenario: Scenario, path) -> None:
    """Per-tick CSV: state, applied control, clearance, phase."""
    arr = result.trajectory.as_array()
    dists = world.batch_min_obstacle_distance(arr, scenario)
    dt = result.trajectory.dt
    controls = result.trajectory.controls
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["t", "x", "y", "heading", "speed", "accel", "steer", "dist", "phase"]
        )
        for i in range(arr.shape[0]):
            u = controls[i] if i < len(controls) else ControlInput(0.0, 0.0)
            w.writerow(
                [
                    round(i * dt, 9),
                    round(float(arr[i, 0]), 9),
                    round(float(arr[i, 1]), 9),
                    round(float(arr[i, 2]), 9),
                    round(float(arr[i, 3]), 9),
                    round(float(u.accel), 9),
                    round(float(u.steer), 9),
                    round(float(dists[i]), 9),
                    result.phases[i],
                ]
            )


def compare(
    scenarios: list,
    seeds: list,
    out_dir,
    planners=PLANNERS,
    max_steps: int = 1200,
    rule_file_text: Optional[str] = None,
    write_traces: bool = True,
) -> dict:
    """Sweep scenario x planner x seed; write summary CSV, JSON, traces.

    Returns the comparison dict that was written to comparison.json.
    The JSON's "timing" section is informational; every other artifact
    is byte-reproducible for the same inputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results: list = []
    for scenario in scenarios:
        for planner in planners:
            for seed in seeds:
                results.append(
                    run_episode(
                        scenario,
                        planner=planner,
                        seed=seed,
                        max_steps=max_steps,
                        rule_file_text=rule_file_text,
                    )
                )
                if planner == "soft-mpc":
                    break  # deterministic: one run covers every seed

    rule_names = []
    for r in results:
        for name in r.rule_report:
            if name not in rule_names:
                rule_names.append(name)

    rows = [_row_of(r, rule_names) for r in results]
    header = list(rows[0].keys()) if rows else []
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        w.writerows(rows)

    if write_traces:
        traces = out / "episodes"
        traces.mkdir(exist_ok=True)
        by_name = {s.name: s for s in scenarios}
        for r in results:
            write_episode_trace(
                r,
                by_name[r.scenario_name],
                traces / f"{r.scenario_name}_{r.planner_name}_seed{r.seed}.csv",
            )

    summary = {}
    for scenario in scenarios:
        for planner in planners:
            sub = [
                r
                for r in results
                if r.scenario_name == scenario.name and r.planner_name == planner
            ]
            if not sub:
                continue
            key = f"{scenario.name}/{planner}"
            clear = [r.metrics["min_clearance"] for r in sub]
            summary[key] = {
                "episodes": len(sub),
                "goals": sum(r.ok for r in sub),
                "collisions": sum(r.metrics["collided"] for r in sub),
                "min_clearance_worst": min(clear),
                "min_clearance_mean": float(np.mean(clear)),
                "rules_satisfied_all": sum(
                    all(e["satisfied"] for e in r.rule_report.values()) for r in sub
                ),
            }

    comparison = {
        "rows": rows,
        "summary": summary,
        "seeds": list(seeds),
        "planners": list(planners),
        "max_steps": max_steps,
        "timing": {
            f"{r.scenario_name}/{r.planner_name}/seed{r.seed}": {
                k: round(r.metrics[k], 3) for k in _TIMING_KEYS
            }
            for r in results
        },
    }
    with open(out / "comparison.json", "w") as fh:
        json.dump(comparison, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")

    with open(out / "table.txt", "w") as fh:
        fh.write(render_table(summary) + "\n")
    return comparison


def render_table(summary: dict) -> str:
    cols = [
        ("run", 28),
        ("episodes", 9),
        ("goals", 6),
        ("collisions", 11),
        ("worst clearance", 16),
        ("all rules ok", 13),
    ]
    lines = ["  ".join(name.ljust(w) for name, w in cols)]
    lines.append("  ".join("-" * w for _, w in cols))
    for key in sorted(summary):
        s = summary[key]
        lines.append(
            "  ".join(
                [
                    key.ljust(28),
                    str(s["episodes"]).ljust(9),
                    str(s["goals"]).ljust(6),
                    str(s["collisions"]).ljust(11),
                    f"{s['min_clearance_worst']:.3f}".ljust(16),
                    str(s["rules_satisfied_all"]).ljust(13),
                ]
            )
        )
    return "\n".join(lines)

"""Scenario text format and builtin deadlock layouts.

The file format is sectioned key/value text: repeated `[lane]` and
`[obstacle]` sections plus singular `[scenario]`, `[ego]`, `[goal]`,
`[intersection]`, `[rules]`, `[grid]`, `[mppi]` and `[deadlock]` sections.
Distances in meters, angles in radians. `save_scenario` round-trips
losslessly through `load_scenario`.
"""

from __future__ import annotations

import math

import numpy as np

from .vehicle import VehicleParams, VehicleState
from .world import (
    EGO_DIRECTION,
    ONCOMING,
    GoalRegion,
    IntersectionZone,
    LaneSegment,
    Obstacle,
    RuleParams,
    Scenario,
    ScenarioError,
)

BUILTIN_NAMES = (
    "intersection",
    "lane_deadlock",
    "traffic_deadlock",
    "narrow_front",
    "boxed_in",
)

_VEHICLE_KEYS = (
    "wheelbase",
    "body_length",
    "body_width",
    "max_speed",
    "min_speed",
    "max_steer",
    "max_accel",
    "max_speed_change_per_step",
)


def _parse_floats(value: str, line: int, count=None):
    try:
        vals = [float(tok) for tok in value.split()]
    except ValueError:
        raise ScenarioError(f"line {line}: expected numbers, got {value!r}")
    if count is not None and len(vals) != count:
        raise ScenarioError(f"line {line}: expected {count} numbers, got {len(vals)}")
    return vals


def _parse_points(value: str, line: int) -> np.ndarray:
    pts = []
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        pts.append(_parse_floats(chunk, line, 2))
    if len(pts) < 2:
        raise ScenarioError(f"line {line}: polyline needs >= 2 points")
    return np.array(pts)


def _read_sections(text: str):
    """Split sectioned key/value text into (section, {key: (value, line)})."""
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = (line[1:-1].strip().lower(), {}, lineno)
            sections.append(current)
            continue
        if current is None:
            raise ScenarioError(f"line {lineno}: key outside any [section]")
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ScenarioError(f"line {lineno}: empty key")
        if key in current[1]:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        current[1][key] = (value, lineno)
    return sections


def _pop(entries: dict, key: str, section: str, lineno: int):
    if key not in entries:
        raise ScenarioError(f"[{section}] at line {lineno}: missing key {key!r}")
    return entries.pop(key)


def _reject_leftovers(entries: dict, section: str):
    if entries:
        key, (_, lineno) = next(iter(entries.items()))
        raise ScenarioError(f"line {lineno}: unknown [{section}] key {key!r}")


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario from its text form."""
    lanes, obstacles = [], []
    meta = {"name": "scenario", "cruise_speed": 2.0}
    ego_state = None
    vehicle = None
    goal = None
    intersection = None
    rules = {}
    rule_weights = {}
    passthrough = {"grid": {}, "mppi": {}, "deadlock": {}}

    for section, entries, lineno in _read_sections(text):
        if section == "scenario":
            if "name" in entries:
                meta["name"] = entries.pop("name")[0]
            if "cruise_speed" in entries:
                value, ln = entries.pop("cruise_speed")
                meta["cruise_speed"] = _parse_floats(value, ln, 1)[0]
            _reject_leftovers(entries, section)
        elif section == "lane":
            value, ln = _pop(entries, "centerline", section, lineno)
            centerline = _parse_points(value, ln)
            value, ln = _pop(entries, "width", section, lineno)
            width = _parse_floats(value, ln, 1)[0]
            direction = entries.pop("direction", (EGO_DIRECTION, lineno))[0]
            lane_id = entries.pop("id", (f"lane{len(lanes)}", lineno))[0]
            _reject_leftovers(entries, section)
            if direction not in (EGO_DIRECTION, ONCOMING):
                raise ScenarioError(f"[lane] at line {lineno}: bad direction {direction!r}")
            lanes.append(LaneSegment(centerline, width, direction, lane_id))
        elif section == "obstacle":
            value, ln = _pop(entries, "center", section, lineno)
            cx, cy = _parse_floats(value, ln, 2)
            value, ln = _pop(entries, "heading", section, lineno)
            heading = _parse_floats(value, ln, 1)[0]
            value, ln = _pop(entries, "length", section, lineno)
            length = _parse_floats(value, ln, 1)[0]
            value, ln = _pop(entries, "width", section, lineno)
            width = _parse_floats(value, ln, 1)[0]
            ob_id = entries.pop("id", (f"obstacle{len(obstacles)}", lineno))[0]
            _reject_leftovers(entries, section)
            obstacles.append(Obstacle((cx, cy), heading, length, width, ob_id))
        elif section == "ego":
            value, ln = _pop(entries, "state", section, lineno)
            x, y, heading, speed = _parse_floats(value, ln, 4)
            ego_state = VehicleState(x, y, heading, speed)
            preset = entries.pop("preset", ("road", lineno))[0]
            if preset == "road":
                base = VehicleParams.road_car()
            elif preset == "scaled":
                base = VehicleParams.scaled_car()
            else:
                raise ScenarioError(f"[ego] at line {lineno}: unknown preset {preset!r}")
            overrides = {}
            for key in list(entries):
                if key in _VEHICLE_KEYS:
                    value, ln = entries.pop(key)
                    overrides[key] = _parse_floats(value, ln, 1)[0]
            _reject_leftovers(entries, section)
            if overrides:
                fields = {k: getattr(base, k) for k in _VEHICLE_KEYS}
                fields.update(overrides)
                base = VehicleParams(**fields)
            vehicle = base
        elif section == "goal":
            value, ln = _pop(entries, "center", section, lineno)
            cx, cy = _parse_floats(value, ln, 2)
            value, ln = _pop(entries, "radius", section, lineno)
            radius = _parse_floats(value, ln, 1)[0]
            target_heading = None
            tol = 0.35
            if "target_heading" in entries:
                value, ln = entries.pop("target_heading")
                target_heading = _parse_floats(value, ln, 1)[0]
            if "heading_tolerance" in entries:
                value, ln = entries.pop("heading_tolerance")
                tol = _parse_floats(value, ln, 1)[0]
            _reject_leftovers(entries, section)
            goal = GoalRegion((cx, cy), radius, target_heading, tol)
        elif section == "intersection":
            value, ln = _pop(entries, "zone", section, lineno)
            x0, x1, y0, y1 = _parse_floats(value, ln, 4)
            stop_line = None
            if "stop_line" in entries:
                value, ln = entries.pop("stop_line")
                stop_line = tuple(_parse_floats(value, ln, 2))
            _reject_leftovers(entries, section)
            intersection = IntersectionZone(x0, x1, y0, y1, stop_line)
        elif section == "rules":
            for key in list(entries):
                value, ln = entries.pop(key)
                if key.startswith("weight."):
                    rule_weights[key[len("weight."):]] = _parse_floats(value, ln, 1)[0]
                elif key in ("d_safe", "dv_max", "stop_hold", "oncoming_lookahead", "weight"):
                    rules[key] = _parse_floats(value, ln, 1)[0]
                else:
                    raise ScenarioError(f"line {ln}: unknown [rules] key {key!r}")
        elif section in passthrough:
            for key in list(entries):
                value, ln = entries.pop(key)
                vals = _parse_floats(value, ln)
                passthrough[section][key] = vals[0] if len(vals) == 1 else vals
        else:
            raise ScenarioError(f"line {lineno}: unknown section [{section}]")

    if ego_state is None or vehicle is None:
        raise ScenarioError("missing [ego] section")
    if goal is None:
        raise ScenarioError("missing [goal] section")
    if not lanes:
        raise ScenarioError("scenario needs at least one [lane]")

    scenario = Scenario(
        lanes=lanes,
        obstacles=obstacles,
        ego_start=ego_state,
        goal=goal,
        vehicle_params=vehicle,
        intersection=intersection,
        rules=RuleParams(weights=rule_weights, **rules),
        name=meta["name"],
        cruise_speed=meta["cruise_speed"],
        grid_overrides=passthrough["grid"],
        mppi_overrides=passthrough["mppi"],
        deadlock_overrides=passthrough["deadlock"],
    )
    return scenario.validate()


def load_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def save_scenario(scenario: Scenario) -> str:
    """Serialize a scenario to its text form (inverse of load_scenario)."""
    out = []
    out.append("[scenario]")
    out.append(f"name = {scenario.name}")
    out.append(f"cruise_speed = {scenario.cruise_speed!r}")
    for lane in scenario.lanes:
        out.append("")
        out.append("[lane]")
        out.append(f"id = {lane.id}")
        pts = ", ".join(f"{float(x)!r} {float(y)!r}" for x, y in lane.centerline)
        out.append(f"centerline = {pts}")
        out.append(f"width = {lane.width!r}")
        out.append(f"direction = {lane.direction}")
    for ob in scenario.obstacles:
        out.append("")
        out.append("[obstacle]")
        out.append(f"id = {ob.id}")
        out.append(f"center = {ob.center[0]!r} {ob.center[1]!r}")
        out.append(f"heading = {ob.heading!r}")
        out.append(f"length = {ob.length!r}")
        out.append(f"width = {ob.width!r}")
    v = scenario.vehicle_params
    out.append("")
    out.append("[ego]")
    s = scenario.ego_start
    out.append(f"state = {s.x!r} {s.y!r} {s.heading!r} {s.speed!r}")
    for key in _VEHICLE_KEYS:
        out.append(f"{key} = {getattr(v, key)!r}")
    g = scenario.goal
    out.append("")
    out.append("[goal]")
    out.append(f"center = {g.center[0]!r} {g.center[1]!r}")
    out.append(f"radius = {g.radius!r}")
    if g.target_heading is not None:
        out.append(f"target_heading = {g.target_heading!r}")
        out.append(f"heading_tolerance = {g.heading_tolerance!r}")
    if scenario.intersection is not None:
        z = scenario.intersection
        out.append("")
        out.append("[intersection]")
        out.append(f"zone = {z.x_min!r} {z.x_max!r} {z.y_min!r} {z.y_max!r}")
        if z.stop_line is not None:
            out.append(f"stop_line = {z.stop_line[0]!r} {z.stop_line[1]!r}")
    r = scenario.rules
    out.append("")
    out.append("[rules]")
    out.append(f"d_safe = {r.d_safe!r}")
    if r.dv_max is not None:
        out.append(f"dv_max = {r.dv_max!r}")
    out.append(f"stop_hold = {r.stop_hold!r}")
    out.append(f"oncoming_lookahead = {r.oncoming_lookahead!r}")
    out.append(f"weight = {r.weight!r}")
    for name, w in sorted(r.weights.items()):
        out.append(f"weight.{name} = {w!r}")
    for section in ("grid", "mppi", "deadlock"):
        overrides = getattr(scenario, f"{section}_overrides")
        if overrides:
            out.append("")
            out.append(f"[{section}]")
            for key, val in overrides.items():
                if isinstance(val, (list, tuple)):
                    out.append(f"{key} = {' '.join(repr(x) for x in val)}")
                else:
                    out.append(f"{key} = {val!r}")
    return "\n".join(out) + "\n"


def _two_lane_road(x_from: float, x_to: float, width=3.5):
    half = 0.5 * width
    return [
        LaneSegment(
            np.array([[x_from, -half], [x_to, -half]]), width, EGO_DIRECTION, "ego_lane"
        ),
        LaneSegment(
            np.array([[x_to, half], [x_from, half]]), width, ONCOMING, "oncoming_lane"
        ),
    ]


def _intersection_scenario() -> Scenario:
    lanes = _two_lane_road(-14.0, 30.0)
    lanes.append(
        LaneSegment(
            np.array([[-1.75, -12.0], [-1.75, 12.0]]), 3.5, EGO_DIRECTION, "cross_up"
        )
    )
    lanes.append(
        LaneSegment(
            np.array([[1.75, 12.0], [1.75, -12.0]]), 3.5, EGO_DIRECTION, "cross_down"
        )
    )
    return Scenario(
        lanes=lanes,
        obstacles=[Obstacle((12.0, -1.75), 0.0, 4.5, 1.8, "stopped_car")],
        ego_start=VehicleState(-14.0, -1.75, 0.0, 0.0),
        goal=GoalRegion((26.0, -1.75), 2.0),
        vehicle_params=VehicleParams.road_car(),
        intersection=IntersectionZone(-3.5, 3.5, -3.5, 3.5, stop_line=(-3.5, -1.75)),
        rules=RuleParams(),
        name="intersection",
        cruise_speed=2.0,
    )


def _lane_deadlock_scenario() -> Scenario:
    return Scenario(
        lanes=_two_lane_road(-12.0, 28.0),
        obstacles=[Obstacle((8.0, -1.4), 0.35, 4.5, 1.8, "wreck")],
        ego_start=VehicleState(-12.0, -1.75, 0.0, 0.0),
        goal=GoalRegion((23.0, -1.75), 2.0),
        vehicle_params=VehicleParams.road_car(),
        rules=RuleParams(),
        name="lane_deadlock",
        cruise_speed=2.0,
    )


def _traffic_deadlock_scenario() -> Scenario:
    return Scenario(
        lanes=_two_lane_road(-12.0, 40.0),
        obstacles=[
            Obstacle((6.0, -1.75), 0.0, 4.5, 1.8, "stalled_a"),
            Obstacle((16.0, -1.75), 0.0, 4.5, 1.8, "stalled_b"),
            Obstacle((38.0, 1.75), np.pi, 4.5, 1.8, "oncoming_parked"),
        ],
        ego_start=VehicleState(-12.0, -1.75, 0.0, 0.0),
        goal=GoalRegion((32.0, -1.75), 2.0),
        vehicle_params=VehicleParams.road_car(),
        rules=RuleParams(),
        name="traffic_deadlock",
        cruise_speed=2.0,
    )


def _scaled_rules() -> RuleParams:
    return RuleParams(d_safe=0.05, stop_hold=3.0, oncoming_lookahead=0.8)


def _scaled_overrides():
    grid = {"coarse_cell": 0.1, "fine_cell": 0.025, "refine_radius": 0.3}
    deadlock = {"progress_epsilon": 0.05, "window": 3.0, "blocked_lookahead": 0.8}
    mppi = {"sigma_vel": 0.06}
    return grid, mppi, deadlock


def _narrow_front_scenario() -> Scenario:
    half = 0.3
    lanes = [
        LaneSegment(
            np.array([[-1.2, -half], [3.6, -half]]), 0.6, EGO_DIRECTION, "ego_lane"
        ),
        LaneSegment(
            np.array([[3.6, half], [-1.2, half]]), 0.6, ONCOMING, "oncoming_lane"
        ),
    ]
    grid, mppi, deadlock = _scaled_overrides()
    return Scenario(
        lanes=lanes,
        obstacles=[
            Obstacle((1.2, -0.3), 0.0, 0.44, 0.28, "blocker"),
            Obstacle((0.6, 0.45), 0.0, 0.44, 0.28, "parked_a"),
            Obstacle((1.9, 0.45), 0.0, 0.44, 0.28, "parked_b"),
        ],
        ego_start=VehicleState(-1.0, -0.3, 0.0, 0.0),
        goal=GoalRegion((3.0, -0.3), 0.3),
        vehicle_params=VehicleParams.scaled_car(),
        rules=_scaled_rules(),
        name="narrow_front",
        cruise_speed=0.5,
        grid_overrides=grid,
        mppi_overrides=mppi,
        deadlock_overrides=deadlock,
    )


def _boxed_in_scenario() -> Scenario:
    half = 0.3
    lanes = [
        LaneSegment(
            np.array([[-1.6, -half], [3.6, -half]]), 0.6, EGO_DIRECTION, "ego_lane"
        ),
        LaneSegment(
            np.array([[3.6, half], [-1.6, half]]), 0.6, ONCOMING, "oncoming_lane"
        ),
    ]
    grid, mppi, deadlock = _scaled_overrides()
    return Scenario(
        lanes=lanes,
        obstacles=[
            Obstacle((1.0, -0.3), 0.0, 0.44, 0.28, "front_car"),
            Obstacle((-1.05, -0.3), 0.0, 0.44, 0.28, "rear_car"),
            Obstacle((0.0, 0.45), 0.0, 0.44, 0.28, "side_car"),
        ],
        ego_start=VehicleState(-0.2, -0.3, 0.0, 0.0),
        goal=GoalRegion((3.0, -0.3), 0.3),
        vehicle_params=VehicleParams.scaled_car(),
        rules=_scaled_rules(),
        name="boxed_in",
        cruise_speed=0.4,
        grid_overrides=grid,
        mppi_overrides=mppi,
        deadlock_overrides=deadlock,
    )


_BUILDERS = {
    "intersection": _intersection_scenario,
    "lane_deadlock": _lane_deadlock_scenario,
    "traffic_deadlock": _traffic_deadlock_scenario,
    "narrow_front": _narrow_front_scenario,
    "boxed_in": _boxed_in_scenario,
}


def builtin(name: str) -> Scenario:
    """Construct one of the builtin deadlock scenarios by name."""
    if name not in _BUILDERS:
        known = ", ".join(BUILTIN_NAMES)
        raise ScenarioError(f"unknown builtin {name!r} (known: {known})")
    return _BUILDERS[name]().validate()

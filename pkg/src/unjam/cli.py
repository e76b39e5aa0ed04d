"""Command-line front end: run an episode, compare planners, check files.

Exit codes for `run` mirror the episode outcome: 0 for goal, 2 for
collision, 3 for a failed or timed-out episode. Usage and config
errors exit 1 everywhere.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .baseline import BaselineConfig
from .harness import (
    _TIMING_KEYS,
    PLANNERS,
    compare,
    render_table,
    run_episode,
    write_episode_trace,
)
from .mppi import MppiConfig
from .scenarios import (
    BUILTIN_NAMES,
    builtin,
    load_scenario_file,
    save_scenario,
)
from .stl.parser import StlSyntaxError
from .stl.rules import build_rule_set, parse_rule_file
from .svgplot import save_episode_svg
from .world import ScenarioError

OUT_ENV = "UNJAM_OUT"
DEFAULT_SWEEP = ("intersection", "lane_deadlock", "traffic_deadlock")

# --set namespaces: dataclass the field must live on, planner it applies to
_OVERRIDE_SPACES = {
    "mppi": (MppiConfig, "stl-mppi"),
    "baseline": (BaselineConfig, "soft-mpc"),
}


class UsageError(Exception):
    pass


def _resolve_scenario(token: str):
    """Builtin name or scenario file path -> (Scenario, source path or None)."""
    if token in BUILTIN_NAMES:
        return builtin(token), None
    path = Path(token)
    if path.exists():
        return load_scenario_file(path), str(path)
    raise UsageError(
        f"unknown scenario {token!r}: not a builtin"
        f" ({', '.join(BUILTIN_NAMES)}) and no such file"
    )


def parse_overrides(pairs, planner: str) -> dict:
    """Validate --set key=value pairs against the planner's config fields."""
    out = {}
    for item in pairs or []:
        key, sep, raw = item.partition("=")
        if not sep or not key or not raw:
            raise UsageError(f"--set expects key=value, got {item!r}")
        space, dot, name = key.partition(".")
        if not dot or space not in _OVERRIDE_SPACES:
            raise UsageError(
                f"--set key {key!r}: expected <namespace>.<field> with"
                f" namespace in {sorted(_OVERRIDE_SPACES)}"
            )
        cls, owner = _OVERRIDE_SPACES[space]
        fields = {f.name: f for f in dataclasses.fields(cls)}
        if name not in fields:
            raise UsageError(
                f"--set key {key!r}: {cls.__name__} has no field {name!r}"
                f" (known: {', '.join(sorted(fields))})"
            )
        if owner != planner:
            raise UsageError(
                f"--set {key!r} configures planner {owner!r},"
                f" but this run uses {planner!r}"
            )
        caster = type(fields[name].default)
        try:
            value = caster(raw)
        except ValueError:
            raise UsageError(
                f"--set {key!r}: cannot read {raw!r} as {caster.__name__}"
            )
        out[name] = value
    return out


def _out_dir(arg) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV, "runs"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_text(path) -> str:
    with open(path) as fh:
        return fh.read()


def _parse_seeds(text: str) -> list:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise UsageError(f"--seeds expects comma-separated integers, got {text!r}")


def cmd_run(args) -> int:
    scenario, source = _resolve_scenario(args.scenario)
    overrides = parse_overrides(args.set, args.planner)
    rule_text = _read_text(args.rules) if args.rules else None
    out = _out_dir(args.out)

    result = run_episode(
        scenario,
        planner=args.planner,
        seed=args.seed,
        max_steps=args.max_steps,
        rule_file_text=rule_text,
        overrides=overrides,
    )

    stem = f"{scenario.name}_{args.planner}_seed{args.seed}"
    write_episode_trace(result, scenario, out / f"{stem}.csv")
    save_episode_svg(out / f"{stem}.svg", scenario, result)
    # replay snapshot: everything needed to reproduce this run exactly,
    # plus the judged outcome; wall-clock timing stays out
    sidecar = {
        "scenario": scenario.name,
        "scenario_source": source,
        "scenario_text": save_scenario(scenario),
        "planner": args.planner,
        "seed": args.seed,
        "max_steps": args.max_steps,
        "overrides": overrides,
        "rules_file": args.rules,
        "rules_text": rule_text,
        "outcome": result.outcome,
        "reason": result.reason,
        "metrics": {
            k: v for k, v in result.metrics.items() if k not in _TIMING_KEYS
        },
        "rules": result.rule_report,
        "phase_log": [list(entry) for entry in result.phase_log],
    }
    with open(out / f"{stem}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")

    print(
        f"{scenario.name} / {args.planner} / seed {args.seed}:"
        f" {result.outcome} ({result.reason});"
        f" sim {result.metrics['sim_time']:.1f} s,"
        f" min clearance {result.metrics['min_clearance']:.3f} m;"
        f" artifacts: {out / stem}.{{csv,json,svg}}"
    )
    return {"goal": 0, "collision": 2}.get(result.outcome, 3)


def cmd_compare(args) -> int:
    names = args.scenario or list(DEFAULT_SWEEP)
    resolved = [_resolve_scenario(tok)[0] for tok in names]
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    for p in planners:
        if p not in PLANNERS:
            raise UsageError(f"unknown planner {p!r}; expected one of {PLANNERS}")
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        raise UsageError("--seeds is empty")
    rule_text = _read_text(args.rules) if args.rules else None
    out = _out_dir(args.out)

    comparison = compare(
        resolved,
        seeds,
        out,
        planners=planners,
        max_steps=args.max_steps,
        rule_file_text=rule_text,
    )
    print(render_table(comparison["summary"]))
    print(f"artifacts in {out}")
    return 0


def cmd_check(args) -> int:
    if not args.scenario and not args.rules:
        raise UsageError("check needs --scenario and/or --rules")
    scenario = None
    if args.scenario:
        scenario, source = _resolve_scenario(args.scenario)
        zone = "with intersection zone" if scenario.intersection else "no intersection"
        print(
            f"scenario ok: {scenario.name}"
            f" ({source or 'builtin'}): {len(scenario.lanes)} lanes,"
            f" {len(scenario.obstacles)} obstacles, {zone}"
        )
    if args.rules:
        text = _read_text(args.rules)
        rules = parse_rule_file(text)
        for rule in rules:
            print(f"rule {rule.name} (weight {rule.weight:g}): {rule.formula}")
        if scenario is not None:
            build_rule_set(scenario, text)
            print("rule/scenario cross-checks ok")
        else:
            print("note: no scenario given, zone cross-checks skipped")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unjam",
        description="Deadlock-recovering motion planning runs and checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one closed-loop episode")
    run.add_argument("--scenario", required=True, help="builtin name or file path")
    run.add_argument("--planner", default="stl-mppi", choices=PLANNERS)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default=None, help=f"output dir (default ${OUT_ENV} or ./runs)")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="config override, e.g. mppi.samples=500")
    run.add_argument("--rules", default=None, help="rule definition file")
    run.add_argument("--max-steps", type=int, default=1200)
    run.set_defaults(func=cmd_run)

    comp = sub.add_parser("compare", help="sweep scenarios x planners x seeds")
    comp.add_argument("--scenario", action="append",
                      help="repeatable; default: " + ", ".join(DEFAULT_SWEEP))
    comp.add_argument("--planners", default=",".join(PLANNERS))
    comp.add_argument("--seeds", default="0,1,2,3,4")
    comp.add_argument("--out", default=None)
    comp.add_argument("--rules", default=None)
    comp.add_argument("--max-steps", type=int, default=1200)
    comp.set_defaults(func=cmd_compare)

    check = sub.add_parser("check", help="validate scenario / rule files")
    check.add_argument("--scenario", default=None, help="builtin name or file path")
    check.add_argument("--rules", default=None)
    check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ScenarioError, StlSyntaxError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

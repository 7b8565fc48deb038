"""Command-line entry point wiring scenario generation, time allocation,
training, planning, evaluation, and plot-data export.

Exit codes: 0 success, 1 usage or argument error, 2 infeasible instance,
3 numeric failure. Every output file embeds the effective configuration and
the package version for provenance.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import sys

from . import __version__, jsonio
from .errors import (
    InfeasibleInstanceError,
    InvalidArgumentError,
    NumericFailureError,
    WptplanError,
)
from .evaluate import InstanceSpec, METHODS, battery_sweep, evaluate, sweep_grid
from .policy import rollout
from .routes import validate_plan
from .scenario import MB_BITS, PhysicsConfig, Scenario, UavConfig, generate_scenario
from .timealloc import build_profiles
from .trainer import TrainConfig, load_policy, train


def _meta(command: str, config: dict) -> dict:
    return {"version": f"wptplan-{__version__}", "command": command, "config": config}


def _csv_header_lines(command: str, config: dict) -> list[str]:
    return [f"version=wptplan-{__version__}", f"command={command}", f"config={jsonio.dumps(config)}"]


def _write_csv(path: str, header_lines: list[str], columns: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [v if isinstance(v, (int, str)) else jsonio.format_float(v) for v in row]
            )


def _apply_overrides(args, physics: PhysicsConfig, uav: UavConfig):
    """Apply --set dotted-key overrides; unknown keys are rejected."""
    physics_fields = {f.name for f in dataclasses.fields(PhysicsConfig)}
    uav_fields = {f.name for f in dataclasses.fields(UavConfig)}
    for item in args.set or []:
        if "=" not in item:
            raise InvalidArgumentError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        scope, _, name = key.partition(".")
        if scope == "physics" and name in physics_fields:
            physics = dataclasses.replace(physics, **{name: float(value)})
        elif scope == "uav" and name in uav_fields:
            uav = dataclasses.replace(uav, **{name: float(value)})
        else:
            raise InvalidArgumentError(f"unknown override key {key!r}")
    return physics, uav


def _load_scenario(path: str) -> Scenario:
    return jsonio.scenario_from_dict(jsonio.load(path))


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def _cmd_gen(args) -> int:
    physics, uav = _apply_overrides(args, PhysicsConfig(), UavConfig())
    scenario = generate_scenario(
        n=args.n,
        area=args.area,
        data_range=(args.data_min_mb * MB_BITS, args.data_max_mb * MB_BITS),
        seed=args.seed,
        physics=physics,
        uav=uav,
        neighbor_radius=args.neighbor_radius,
    )
    config = {
        "n": args.n, "area": args.area, "data_min_mb": args.data_min_mb,
        "data_max_mb": args.data_max_mb, "seed": args.seed,
        "neighbor_radius": args.neighbor_radius, "set": args.set or [],
    }
    jsonio.dump(jsonio.scenario_to_dict(scenario, meta=_meta("gen", config)), args.output)
    return 0


def _cmd_timealloc(args) -> int:
    scenario = _load_scenario(args.input)
    profiles = build_profiles(scenario, mode=args.mode)
    config = {"input": args.input, "mode": args.mode}
    jsonio.dump(jsonio.profiles_to_dict(profiles, meta=_meta("timealloc", config)), args.output)
    if args.gap_csv:
        rows = [[p.device, p.gap_rel if p.gap_rel is not None else ""] for p in profiles]
        _write_csv(args.gap_csv, _csv_header_lines("timealloc", config),
                   ["device", "gap_rel"], rows)
    return 0


def _cmd_train(args) -> int:
    raw = jsonio.load(args.config)
    config = TrainConfig.from_dict(raw)
    if args.out_dir:
        config = dataclasses.replace(
            config,
            checkpoint_dir=args.out_dir,
            checkpoint_every=config.checkpoint_every or config.epochs,
        )

    def progress(row):
        print(
            f"epoch {row.epoch}: mean_reward={row.mean_reward:.1f} "
            f"critic_loss={row.critic_loss:.4f}",
            file=sys.stderr,
        )

    _, _, report = train(config, resume_from=args.resume,
                         progress=progress if args.verbose else None)
    if args.report:
        report.write_csv(args.report, _csv_header_lines("train", config.to_dict()))
    return 0


def _cmd_plan(args) -> int:
    scenario = _load_scenario(args.scenario)
    policy, _, _ = load_policy(args.checkpoint)
    profiles = build_profiles(scenario, mode=args.mode)
    plan, _ = rollout(scenario, profiles, policy, mode="greedy")
    validate_plan(plan, scenario, profiles)
    config = {"scenario": args.scenario, "checkpoint": args.checkpoint, "mode": args.mode}
    jsonio.dump(jsonio.plan_to_dict(plan, meta=_meta("plan", config)), args.output)
    if args.polyline:
        _write_polyline(args.polyline, plan, scenario, config)
    return 0


def _write_polyline(path: str, plan, scenario: Scenario, config: dict) -> None:
    rows = []
    for seg_id, segment in enumerate(plan.segments):
        for order, index in enumerate(segment):
            point = scenario.hover_point(index)
            rows.append([seg_id, order, index, point.x, point.y, point.z])
    _write_csv(path, _csv_header_lines("plan", config),
               ["segment", "order", "node", "x", "y", "z"], rows)


def _parse_sweep(text: str) -> tuple[list[float], float]:
    grid = None
    voltage = 22.2
    for part in text.split(","):
        key, _, value = part.partition("=")
        if key == "battery":
            lo, hi, step = (float(v) for v in value.split(":"))
            grid = sweep_grid(lo, hi, step)
        elif key == "voltage":
            voltage = float(value)
        else:
            raise InvalidArgumentError(f"unknown sweep key {key!r}")
    if grid is None:
        raise InvalidArgumentError("sweep needs battery=lo:hi:step")
    return grid, voltage


def _cmd_eval(args) -> int:
    methods = [m.strip() for m in args.methods.split(",")]
    for method in methods:
        if method not in METHODS:
            raise InvalidArgumentError(f"unknown method {method!r}; choose from {METHODS}")
    policy = None
    if "policy" in methods:
        if not args.checkpoint:
            raise InvalidArgumentError("--checkpoint is required when evaluating the policy")
        policy, _, _ = load_policy(args.checkpoint)
    spec = InstanceSpec(
        n=args.n,
        count=args.count,
        seed0=args.seed0,
        area=args.area,
        data_min=args.data_min_mb * MB_BITS,
        data_max=args.data_max_mb * MB_BITS,
        storage_bits=args.storage_mb * MB_BITS,
        energy_j=args.energy_j,
    )
    config = {
        "methods": methods, "spec": dataclasses.asdict(spec), "mode": args.mode,
        "sweep": args.sweep, "threads": args.threads,
    }
    headers = _csv_header_lines("eval", config)
    if args.sweep:
        grid, voltage = _parse_sweep(args.sweep)
        rows = battery_sweep(methods, spec, grid, voltage, args.mode, policy, args.threads)
        _write_csv(
            args.output, headers,
            ["method", "battery_mah", "energy_capacity_j", "mean_energy_j",
             "min_energy_j", "std_energy_j", "mean_uavs"],
            [[r["method"], r["battery_mah"], r["energy_capacity_j"], r["mean_energy_j"],
              r["min_energy_j"], r["std_energy_j"], r["mean_uavs"]] for r in rows],
        )
        return 0
    results = evaluate(methods, spec.build(), args.mode, policy, args.threads)
    summary = [
        [r.method, len(r.energies), r.minimum, r.mean, r.std, r.wall_time] for r in results
    ]
    _write_csv(args.output, headers,
               ["method", "count", "min_energy_j", "mean_energy_j", "std_energy_j", "wall_s"],
               summary)
    if args.per_instance:
        rows = []
        for r in results:
            for seed, energy, dist, m in zip(spec.seeds(), r.energies, r.distances, r.uav_counts):
                rows.append([r.method, seed, energy, dist, m])
        _write_csv(args.per_instance, headers,
                   ["method", "seed", "energy_j", "flight_m", "uavs"], rows)
    return 0


def _cmd_plot_export(args) -> int:
    did_something = False
    if args.plan and args.scenario and args.polyline:
        plan = jsonio.plan_from_dict(jsonio.load(args.plan))
        scenario = _load_scenario(args.scenario)
        _write_polyline(args.polyline, plan, scenario,
                        {"plan": args.plan, "scenario": args.scenario})
        did_something = True
    if args.report and args.reward_curve:
        rows = []
        with open(args.report, "r", newline="") as fh:
            reader = csv.DictReader(line for line in fh if not line.startswith("#"))
            for record in reader:
                rows.append([int(record["epoch"]), float(record["mean_reward"])])
        _write_csv(args.reward_curve, _csv_header_lines("plot-export", {"report": args.report}),
                   ["epoch", "mean_reward"], rows)
        did_something = True
    if not did_something:
        raise InvalidArgumentError(
            "plot-export needs --plan/--scenario/--polyline or --report/--reward-curve"
        )
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wptplan",
        description="Plan minimum-energy multi-UAV data-collection trajectories.",
    )
    parser.add_argument("--version", action="version", version=f"wptplan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a random scenario")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--area", type=float, default=1000.0)
    gen.add_argument("--data-min-mb", type=float, default=0.2)
    gen.add_argument("--data-max-mb", type=float, default=1.5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--neighbor-radius", type=float, default=200.0)
    gen.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override physics.* or uav.* fields")
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=_cmd_gen)

    alloc = sub.add_parser("timealloc", help="solve per-device time allocation")
    alloc.add_argument("-i", "--input", required=True)
    alloc.add_argument("-o", "--output", required=True)
    alloc.add_argument("--mode", choices=["closed_form", "numeric", "verify"], default="verify")
    alloc.add_argument("--gap-csv", default=None)
    alloc.set_defaults(func=_cmd_timealloc)

    tr = sub.add_parser("train", help="train the routing policy")
    tr.add_argument("--config", required=True, help="TrainConfig JSON")
    tr.add_argument("--out-dir", default=None, help="checkpoint directory")
    tr.add_argument("--resume", default=None, help="checkpoint to resume from")
    tr.add_argument("--report", default=None, help="per-epoch CSV output")
    tr.add_argument("--verbose", action="store_true")
    tr.set_defaults(func=_cmd_train)

    plan = sub.add_parser("plan", help="decode a plan for a scenario")
    plan.add_argument("-i", "--scenario", required=True)
    plan.add_argument("--checkpoint", required=True)
    plan.add_argument("-o", "--output", required=True)
    plan.add_argument("--mode", choices=["numeric", "verify"], default="numeric")
    plan.add_argument("--polyline", default=None, help="per-segment polyline CSV")
    plan.set_defaults(func=_cmd_plan)

    ev = sub.add_parser("eval", help="compare planners over an instance set")
    ev.add_argument("--methods", default="nearest_neighbor,random")
    ev.add_argument("--checkpoint", default=None)
    ev.add_argument("--n", type=int, default=20)
    ev.add_argument("--count", type=int, default=100)
    ev.add_argument("--seed0", type=int, default=10_000)
    ev.add_argument("--area", type=float, default=1000.0)
    ev.add_argument("--data-min-mb", type=float, default=0.2)
    ev.add_argument("--data-max-mb", type=float, default=1.5)
    ev.add_argument("--storage-mb", type=float, default=6.0)
    ev.add_argument("--energy-j", type=float, default=455544.0)
    ev.add_argument("--mode", choices=["closed_form", "numeric", "verify"], default="numeric")
    ev.add_argument("--sweep", default=None, metavar="battery=LO:HI:STEP,voltage=V")
    ev.add_argument("--threads", type=int, default=1)
    ev.add_argument("-o", "--output", required=True)
    ev.add_argument("--per-instance", default=None)
    ev.set_defaults(func=_cmd_eval)

    plot = sub.add_parser("plot-export", help="emit CSVs for external plotting")
    plot.add_argument("--plan", default=None)
    plot.add_argument("--scenario", default=None)
    plot.add_argument("--polyline", default=None)
    plot.add_argument("--report", default=None)
    plot.add_argument("--reward-curve", default=None)
    plot.set_defaults(func=_cmd_plot_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except InfeasibleInstanceError as exc:
        print(f"wptplan: infeasible instance: {exc}", file=sys.stderr)
        return 2
    except NumericFailureError as exc:
        print(f"wptplan: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (WptplanError, OSError, KeyError) as exc:
        print(f"wptplan: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

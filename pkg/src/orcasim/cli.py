"""Command-line entry point: run scenario files, generate and run built-in
crossings, and benchmark scaling.

Exit codes: 0 clean, 2 validation failure, 3 non-termination, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import yaml

from .bench import run_bench, write_bench_report
from .crossings import crossing_config
from .engine import run
from .scenario import (ScenarioError, atomic_write_text, load_scenario,
                       write_metrics_summary, write_trajectories)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONTERMINATION = 3
EXIT_IO = 4


def _apply_overrides(config, args):
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "dt", None) is not None:
        config.dt = args.dt
    if getattr(args, "tau", None) is not None:
        config.tau = args.tau
    if getattr(args, "frames", None) is not None:
        config.max_frames = args.frames
    return config


def _write_agents_csv(result, path):
    def emit(f):
        writer = csv.writer(f)
        writer.writerow(["agent_id", "class", "spawn_x", "spawn_y",
                         "goal_x", "goal_y", "radius"])
        for rec in result.agent_records:
            writer.writerow([
                str(rec["id"]), rec["agent_class"].label,
                repr(float(rec["spawn"][0])), repr(float(rec["spawn"][1])),
                repr(float(rec["goal"][0])), repr(float(rec["goal"][1])),
                repr(float(rec["radius"])),
            ])
    atomic_write_text(path, emit)


def _execute(config, out_dir, workers, quiet=False):
    os.makedirs(out_dir, exist_ok=True)
    result = run(config, worker_count=workers, record_trajectories=True)
    write_trajectories(result.frame_logs, os.path.join(out_dir, "trajectories.csv"))
    write_metrics_summary(result.summary, os.path.join(out_dir, "metrics.csv"))
    _write_agents_csv(result, os.path.join(out_dir, "agents.csv"))
    s = result.summary
    if not quiet:
        print(f"{s.frames} frames, {s.agents} agents ({s.arrived} arrived), "
              f"{s.total_collisions} collisions, min separation {s.min_separation:.6g} m, "
              f"mean frame {s.mean_frame_ms:.3f} ms")
    for warning in config.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if not s.terminated:
        print(f"error: simulation did not terminate within {config.frame_guard()} frames; "
              f"{s.agents - s.arrived} agents still active", file=sys.stderr)
        return EXIT_NONTERMINATION
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    _apply_overrides(config, args)
    return _execute(config, args.out, args.workers)


def cmd_crossing(args) -> int:
    config = crossing_config(args.kind, args.agents, args.vehicle_fraction,
                             seed=args.seed if args.seed is not None else 0)
    _apply_overrides(config, args)
    if args.dump_scenario:
        from .crossings import four_way_dict, two_way_dict
        maker = two_way_dict if args.kind == "two_way" else four_way_dict
        data = maker(args.agents, args.vehicle_fraction,
                     seed=config.seed)
        atomic_write_text(args.dump_scenario,
                          lambda f: yaml.safe_dump(data, f, sort_keys=False))
    return _execute(config, args.out, args.workers)


def cmd_bench(args) -> int:
    report = run_bench(args.agents, args.workers, repetitions=args.reps,
                       frames=args.frames, seed=args.seed if args.seed is not None else 0,
                       vehicle_fraction=args.vehicle_fraction)
    write_bench_report(report, args.out)
    print(f"machine: {report.machine}")
    for r in report.rows:
        print(f"agents={r.agent_count} workers={r.worker_count} "
              f"mean={r.mean_ms:.3f} ms p95={r.p95_ms:.3f} ms "
              f"frames={r.frames} collisions={r.collisions}")
    return EXIT_OK


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orcasim",
        description="Headless shared-space crowd and vehicle simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("--scenario", required=True, help="scenario YAML path")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--dt", type=float, default=None)
    p_run.add_argument("--tau", type=float, default=None)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--frames", type=int, default=None,
                       help="override the max-frame guard")
    p_run.set_defaults(func=cmd_run)

    p_cross = sub.add_parser("crossing", help="generate and run a built-in crossing")
    p_cross.add_argument("--kind", choices=["two_way", "four_way"], required=True)
    p_cross.add_argument("--agents", type=int, required=True,
                         help="agents per arm")
    p_cross.add_argument("--vehicle-fraction", dest="vehicle_fraction",
                         type=float, default=0.0)
    p_cross.add_argument("--out", required=True)
    p_cross.add_argument("--seed", type=int, default=None)
    p_cross.add_argument("--dt", type=float, default=None)
    p_cross.add_argument("--tau", type=float, default=None)
    p_cross.add_argument("--workers", type=int, default=1)
    p_cross.add_argument("--frames", type=int, default=None)
    p_cross.add_argument("--dump-scenario", default=None,
                         help="also write the generated scenario YAML here")
    p_cross.set_defaults(func=cmd_crossing)

    p_bench = sub.add_parser("bench", help="frame-time benchmark")
    p_bench.add_argument("--agents", type=_int_list, required=True,
                         help="comma-separated total agent counts")
    p_bench.add_argument("--workers", type=_int_list, required=True,
                         help="comma-separated worker counts")
    p_bench.add_argument("--reps", type=int, default=1)
    p_bench.add_argument("--frames", type=int, default=500)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--vehicle-fraction", dest="vehicle_fraction",
                         type=float, default=0.5)
    p_bench.add_argument("--out", required=True, help="report CSV path")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Headless benchmark harness: frame-time statistics across agent and worker
counts on a standardized 4-way crossing, with no trajectory writing inside the
timed region."""

from __future__ import annotations

import csv
import os
import platform
from dataclasses import dataclass

import numpy as np

from .crossings import crossing_config
from .engine import run
from .scenario import atomic_write_text

__all__ = ["BenchRow", "BenchReport", "run_bench", "write_bench_report",
           "machine_descriptor"]

BENCH_COLUMNS = ["agent_count", "worker_count", "mean_ms", "p95_ms", "frames",
                 "collisions"]

DEFAULT_FRAME_BUDGET = 500


@dataclass
class BenchRow:
    agent_count: int
    worker_count: int
    mean_ms: float
    p95_ms: float
    frames: int
    collisions: int


@dataclass
class BenchReport:
    rows: list[BenchRow]
    machine: str


def machine_descriptor() -> str:
    return (f"{platform.system()} {platform.machine()}, "
            f"{os.cpu_count()} cpus, python {platform.python_version()}")


def _bench_scenario(agent_count: int, seed: int, vehicle_fraction: float,
                    frames: int):
    per_arm = max(1, agent_count // 4)
    return crossing_config("four_way", per_arm, vehicle_fraction, seed=seed,
                           max_frames=frames)


def warmup():
    """Compile-and-touch pass so JIT time never lands inside a timed run."""
    config = _bench_scenario(16, seed=1, vehicle_fraction=0.5, frames=3)
    run(config, worker_count=2, record_trajectories=False)


def run_bench(agent_counts, worker_counts, repetitions: int = 1,
              frames: int = DEFAULT_FRAME_BUDGET, seed: int = 0,
              vehicle_fraction: float = 0.5) -> BenchReport:
    """Frame-time stats for each (agent_count, worker_count) pair over a fixed
    frame budget, repeated `repetitions` times with a fixed seed. Collisions
    and frame counts must not vary across repetitions; timings will."""
    if not agent_counts or not worker_counts:
        raise ValueError("agent_counts and worker_counts must be non-empty")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    warmup()
    rows = []
    for agent_count in sorted(agent_counts):
        config = _bench_scenario(agent_count, seed, vehicle_fraction, frames)
        for worker_count in sorted(worker_counts):
            wall = []
            ref = None
            for _rep in range(repetitions):
                result = run(config, worker_count=worker_count,
                             record_trajectories=False)
                wall.extend(m.wall_ms for m in result.frame_metrics)
                fixed = (result.summary.total_collisions, result.summary.frames)
                if ref is None:
                    ref = fixed
                elif fixed != ref:
                    raise RuntimeError(
                        f"bench run is not deterministic: {fixed} != {ref}")
            wall = np.asarray(wall)
            rows.append(BenchRow(
                agent_count=agent_count, worker_count=worker_count,
                mean_ms=float(wall.mean()), p95_ms=float(np.percentile(wall, 95)),
                frames=int(ref[1]), collisions=int(ref[0])))
    rows.sort(key=lambda r: (r.agent_count, r.worker_count))
    return BenchReport(rows=rows, machine=machine_descriptor())


def write_bench_report(report: BenchReport, path) -> None:
    def emit(f):
        writer = csv.writer(f)
        writer.writerow(BENCH_COLUMNS)
        for r in report.rows:
            writer.writerow([str(r.agent_count), str(r.worker_count),
                             repr(r.mean_ms), repr(r.p95_ms),
                             str(r.frames), str(r.collisions)])
    atomic_write_text(path, emit)

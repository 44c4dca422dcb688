"""Batch two-dimensional linear-program solver.

Each problem asks for the velocity closest to a desired target inside the
intersection of half-plane constraints and a speed disc. Constraints are
inserted in a seed-determined random order (the usual randomized incremental
scheme for low-dimensional programs); when the intersection is empty the solver
falls back to the velocity that least penetrates the constraint set.

Batches are cut into fixed-size work units (measured in constraint-insertion
steps) consumed by worker threads; every problem is a pure function of its own
inputs, so batch output is bitwise identical to the sequential map for any
worker count.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels

MASK64 = (1 << 64) - 1

DEFAULT_WORK_UNIT_STEPS = 64

__all__ = [
    "HalfPlaneConstraint",
    "LpProblem",
    "LpResult",
    "LpStatus",
    "solve_closest_point",
    "solve_least_penetration",
    "solve_batch",
    "shuffle_order",
]


class LpStatus(Enum):
    FEASIBLE = "feasible"
    FALLBACK_USED = "fallback_used"


@dataclass
class HalfPlaneConstraint:
    """One half-plane of permitted velocities.

    `point` lies on the boundary line, `normal` is the unit normal pointing into
    the permitted side: v is allowed iff dot(v - point, normal) >= 0.
    """

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.normal = np.asarray(self.normal, dtype=float)

    def satisfies(self, velocity, slack: float = 0.0) -> bool:
        v = np.asarray(velocity, dtype=float)
        return float(np.dot(v - self.point, self.normal)) >= -slack


@dataclass
class LpProblem:
    """Closest-point problem: constraints, desired velocity, speed cap and the
    seed that fixes the constraint insertion order."""

    constraints: list[HalfPlaneConstraint]
    target: np.ndarray
    speed_cap: float
    shuffle_seed: int = 0

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        self.speed_cap = float(self.speed_cap)
        self.shuffle_seed = int(self.shuffle_seed) & MASK64


@dataclass
class LpResult:
    velocity: np.ndarray
    status: LpStatus
    failed_at: int | None = None

    @property
    def feasible(self) -> bool:
        return self.status is LpStatus.FEASIBLE


def _mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def shuffle_order(count: int, seed: int) -> list[int]:
    """The constraint insertion order used for a given shuffle seed.

    Pure-Python twin of the in-kernel shuffle; kept in lockstep by a test.
    """
    perm = list(range(count))
    state = seed & MASK64
    for i in range(count - 1, 0, -1):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        j = _mix64(state) % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _validate_constraints(constraints, label=""):
    pts = np.empty((len(constraints), 2), dtype=np.float64)
    nrm = np.empty((len(constraints), 2), dtype=np.float64)
    for idx, c in enumerate(constraints):
        p = np.asarray(c.point, dtype=float).reshape(2)
        n = np.asarray(c.normal, dtype=float).reshape(2)
        if not np.all(np.isfinite(p)) or not np.all(np.isfinite(n)):
            raise ValueError(f"{label}constraint {idx}: non-finite point or normal")
        nn = float(n[0] * n[0] + n[1] * n[1])
        if abs(nn - 1.0) > 2.1e-9:
            raise ValueError(
                f"{label}constraint {idx}: normal must be unit length, got |n|={np.sqrt(nn)!r}")
        pts[idx] = p
        nrm[idx] = n
    return pts, nrm


def _validate_problem(problem: LpProblem, label=""):
    target = np.asarray(problem.target, dtype=float).reshape(2)
    if not np.all(np.isfinite(target)):
        raise ValueError(f"{label}target is non-finite")
    cap = float(problem.speed_cap)
    if not np.isfinite(cap) or cap <= 0.0:
        raise ValueError(f"{label}speed_cap must be positive and finite, got {cap!r}")
    pts, nrm = _validate_constraints(problem.constraints, label)
    return pts, nrm, target, cap


def _scratch(k: int):
    k = max(k, 1)
    return (np.empty(k, dtype=np.int64),
            np.empty((k, 2), dtype=np.float64),
            np.empty((k, 2), dtype=np.float64),
            np.empty((k, 2), dtype=np.float64),
            np.empty(k, dtype=np.int64))


def solve_closest_point(problem: LpProblem) -> LpResult:
    """Velocity of the feasible region (half-planes ∩ speed disc) closest to the
    target. On an empty region, returns the least-penetration velocity with
    status FALLBACK_USED and the original index of the constraint whose
    insertion emptied the region."""
    pts, nrm, target, cap = _validate_problem(problem)
    k = len(problem.constraints)
    perm, ppts, pnrm, spts, ident = _scratch(k)
    x, y, status, failed = _kernels._solve_one(
        pts, nrm, k, cap, target[0], target[1],
        np.uint64(problem.shuffle_seed), perm, ppts, pnrm, spts, ident)
    if status == _kernels.FEASIBLE:
        return LpResult(np.array([x, y]), LpStatus.FEASIBLE, None)
    return LpResult(np.array([x, y]), LpStatus.FALLBACK_USED, int(failed))


def solve_least_penetration(constraints, speed_cap, start_index=0,
                            warm_start=(0.0, 0.0)) -> np.ndarray:
    """Velocity minimizing the worst signed constraint violation (clamped at
    zero) within the speed disc; ties broken by proximity to warm_start.

    Constraints are processed in the given order; warm_start is assumed to
    satisfy constraints[:start_index] (the solver's state at the point of
    infeasibility)."""
    cap = float(speed_cap)
    if not np.isfinite(cap) or cap <= 0.0:
        raise ValueError(f"speed_cap must be positive and finite, got {cap!r}")
    warm = np.asarray(warm_start, dtype=float).reshape(2)
    if not np.all(np.isfinite(warm)):
        raise ValueError("warm_start is non-finite")
    pts, nrm = _validate_constraints(constraints)
    k = len(constraints)
    if not 0 <= start_index <= k:
        raise ValueError(f"start_index {start_index} out of range for {k} constraints")
    _, ppts, pnrm, spts, ident = _scratch(k)
    order = np.arange(max(k, 1), dtype=np.int64)
    x, y = _kernels._least_penetration(pts, nrm, order, k, start_index, cap,
                                       warm[0], warm[1], ppts, pnrm, spts, ident)
    return np.array([x, y])


def _pack_batch(problems):
    n = len(problems)
    counts = np.empty(n + 1, dtype=np.int64)
    counts[0] = 0
    validated = []
    for i, p in enumerate(problems):
        pts, nrm, target, cap = _validate_problem(p, label=f"problem {i}: ")
        validated.append((pts, nrm, target, cap))
        counts[i + 1] = counts[i] + len(p.constraints)
    m = int(counts[n])
    cpts = np.empty((m, 2), dtype=np.float64)
    cnrm = np.empty((m, 2), dtype=np.float64)
    tgt = np.empty((n, 2), dtype=np.float64)
    caps = np.empty(n, dtype=np.float64)
    seeds = np.empty(n, dtype=np.uint64)
    for i, (pts, nrm, target, cap) in enumerate(validated):
        lo, hi = counts[i], counts[i + 1]
        cpts[lo:hi] = pts
        cnrm[lo:hi] = nrm
        tgt[i] = target
        caps[i] = cap
        seeds[i] = np.uint64(problems[i].shuffle_seed)
    return counts, cpts, cnrm, tgt, caps, seeds


def _unit_ranges(counts, work_unit_steps):
    """Contiguous problem ranges whose constraint-insertion step cost is about
    one work unit each (at least one problem per unit)."""
    n = len(counts) - 1
    ranges = []
    start = 0
    acc = 0
    for i in range(n):
        acc += max(1, int(counts[i + 1] - counts[i]))
        if acc >= work_unit_steps:
            ranges.append((start, i + 1))
            start = i + 1
            acc = 0
    if start < n:
        ranges.append((start, n))
    return ranges


def run_units(items, worker_count, runner):
    """Consume work units from a shared deque with worker threads.

    Each unit is handled by a nogil kernel writing disjoint output rows, so
    scheduling order cannot affect results."""
    if worker_count <= 1 or len(items) <= 1:
        for item in items:
            runner(*item)
        return
    units = deque(items)

    def worker():
        while True:
            try:
                item = units.popleft()
            except IndexError:
                return
            runner(*item)

    threads = [threading.Thread(target=worker)
               for _ in range(min(worker_count, len(items)))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()


def solve_batch(problems, worker_count: int = 1,
                work_unit_steps: int = DEFAULT_WORK_UNIT_STEPS) -> list[LpResult]:
    """Solve a batch of problems; the output list is index-aligned with the
    input and bitwise identical to mapping solve_closest_point sequentially,
    for every worker_count."""
    if worker_count < 1:
        raise ValueError(f"worker_count must be >= 1, got {worker_count}")
    n = len(problems)
    if n == 0:
        return []
    counts, cpts, cnrm, tgt, caps, seeds = _pack_batch(problems)
    out_v = np.empty((n, 2), dtype=np.float64)
    out_status = np.empty(n, dtype=np.int64)
    out_failed = np.empty(n, dtype=np.int64)

    def runner(a, b):
        _kernels.solve_range(counts, cpts, cnrm, tgt, caps, seeds,
                             out_v, out_status, out_failed, a, b)

    run_units(_unit_ranges(counts, work_unit_steps), worker_count, runner)

    results = []
    for i in range(n):
        if out_status[i] == _kernels.FEASIBLE:
            results.append(LpResult(out_v[i].copy(), LpStatus.FEASIBLE, None))
        else:
            results.append(LpResult(out_v[i].copy(), LpStatus.FALLBACK_USED,
                                    int(out_failed[i])))
    return results

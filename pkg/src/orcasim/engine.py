"""Synchronous per-frame simulation loop.

Every frame: rebuild the spatial grid from the pre-step snapshot, gather each
agent's neighbors and ORCA constraints, solve the whole batch of closest-point
problems against that same snapshot (no agent sees another's new velocity this
frame), integrate, remove arrivals, and record metrics. All per-agent work runs
in nogil kernels over work-unit ranges, so results are bitwise identical for
any worker count.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lp import MASK64, _mix64, run_units
from .orca import AgentClass, AgentState
from .scenario import FrameLog, ScenarioConfig, build_agents

__all__ = [
    "FrameMetrics",
    "SimState",
    "RunSummary",
    "RunResult",
    "desired_velocity",
    "problem_seed",
    "init_state",
    "step",
    "run",
]

COLLISION_TOLERANCE = 1e-6
DEFAULT_WORK_UNIT_STEPS = 4096


def problem_seed(agent_id: int, frame: int) -> int:
    """Shuffle seed for one agent's LP in one frame — a pure function of
    (agent id, frame index), so whole runs replay exactly."""
    return _mix64(((frame & 0xFFFFFFFF) << 32) | (agent_id & 0xFFFFFFFF)) & MASK64


@dataclass
class FrameMetrics:
    frame: int
    wall_ms: float
    min_separation: float
    collision_count: int
    active_agents: int


@dataclass
class SimState:
    """Simulation state after `frame` completed steps (time = frame * dt).

    Agent data is stored as arrays; the `agents` property materializes
    AgentState snapshots on demand."""

    frame: int
    time: float
    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    radii: np.ndarray
    pref_speeds: np.ndarray
    max_speeds: np.ndarray
    goals: np.ndarray
    goal_tols: np.ndarray
    class_codes: np.ndarray
    rng_state: np.random.Generator | None = None
    lp_fallbacks: int = 0

    @property
    def active_count(self) -> int:
        return int(self.ids.shape[0])

    @property
    def agents(self) -> list[AgentState]:
        return [AgentState(
            id=int(self.ids[i]), position=self.positions[i].copy(),
            velocity=self.velocities[i].copy(), radius=float(self.radii[i]),
            pref_speed=float(self.pref_speeds[i]), max_speed=float(self.max_speeds[i]),
            goal=self.goals[i].copy(), agent_class=AgentClass(int(self.class_codes[i])))
            for i in range(self.active_count)]


@dataclass
class RunSummary:
    total_collisions: int
    min_separation: float
    mean_frame_ms: float
    p95_frame_ms: float
    agents: int
    seed: int
    frames: int
    terminated: bool
    arrived: int
    total_fallbacks: int
    mean_travel_time: dict[AgentClass, float]


@dataclass
class RunResult:
    frame_logs: list[FrameLog]
    frame_metrics: list[FrameMetrics]
    summary: RunSummary
    agent_records: list[dict] = field(default_factory=list)
    final_state: SimState | None = None


# ---------------------------------------------------------------------------
# desired velocity
# ---------------------------------------------------------------------------

def desired_velocity(agent: AgentState, dt: float) -> np.ndarray:
    """Unit vector toward the goal scaled to pref_speed; reduced to arrive
    exactly when one step would overshoot; zero at the goal."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    dx = agent.goal[0] - agent.position[0]
    dy = agent.goal[1] - agent.position[1]
    dist = math.sqrt(dx * dx + dy * dy)
    if dist == 0.0:
        return np.zeros(2)
    speed = min(agent.pref_speed, dist / dt)
    scale = speed / dist
    return np.array([dx * scale, dy * scale])


def _desired_velocities(positions, goals, pref_speeds, dt):
    d = goals - positions
    dist = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    speed = np.minimum(pref_speeds, dist / dt)
    safe = np.where(dist > 0.0, dist, 1.0)
    scale = np.where(dist > 0.0, speed / safe, 0.0)
    return d * scale[:, None]


# ---------------------------------------------------------------------------
# grid arrays (CSR layout shared with the kernels)
# ---------------------------------------------------------------------------

_CELL_LIMIT = int(_kernels._CELL_OFFSET) - 2


def _grid_arrays(positions, cell_size):
    ix = np.floor(positions[:, 0] / cell_size).astype(np.int64)
    iy = np.floor(positions[:, 1] / cell_size).astype(np.int64)
    if ix.size and (np.abs(ix).max() > _CELL_LIMIT or np.abs(iy).max() > _CELL_LIMIT):
        raise ValueError("agent position out of indexable grid range")
    key = (ix + _kernels._CELL_OFFSET) * _kernels._CELL_STRIDE + (iy + _kernels._CELL_OFFSET)
    order = np.argsort(key, kind="stable").astype(np.int64)
    skey = key[order]
    ukeys, first = np.unique(skey, return_index=True)
    starts = np.empty(ukeys.shape[0] + 1, dtype=np.int64)
    starts[:-1] = first
    starts[-1] = skey.shape[0]
    return order, ukeys, starts


def _agent_ranges(n, work_unit_steps, max_neighbors):
    per_unit = max(1, work_unit_steps // max(1, max_neighbors))
    return [(s, min(n, s + per_unit)) for s in range(0, n, per_unit)]


# ---------------------------------------------------------------------------
# state construction and stepping
# ---------------------------------------------------------------------------

def init_state(config: ScenarioConfig) -> SimState:
    """Spawn agents and start them at their desired velocities (an agent whose
    optimization velocity already points at its goal needs no frame-0 swerve)."""
    agents = build_agents(config)
    n = len(agents)
    ids = np.array([a.id for a in agents], dtype=np.int64)
    positions = np.array([a.position for a in agents], dtype=np.float64).reshape(n, 2)
    radii = np.array([a.radius for a in agents], dtype=np.float64)
    pref = np.array([a.pref_speed for a in agents], dtype=np.float64)
    maxs = np.array([a.max_speed for a in agents], dtype=np.float64)
    goals = np.array([a.goal for a in agents], dtype=np.float64).reshape(n, 2)
    codes = np.array([int(a.agent_class) for a in agents], dtype=np.int64)
    gtols = np.array([config.goal_tolerance_for(a.agent_class) for a in agents],
                     dtype=np.float64)
    velocities = _desired_velocities(positions, goals, pref, config.dt)
    return SimState(frame=0, time=0.0, ids=ids, positions=positions,
                    velocities=velocities, radii=radii, pref_speeds=pref,
                    max_speeds=maxs, goals=goals, goal_tols=gtols,
                    class_codes=codes, rng_state=np.random.default_rng(config.seed))


def _advance(state: SimState, config: ScenarioConfig, worker_count: int,
             work_unit_steps: int, record_log: bool):
    """One synchronous frame. Returns (new_state, frame_log_or_None,
    min_separation, collision_count, fallback_count, removed_ids)."""
    n = state.active_count
    frame_new = state.frame + 1
    dt = config.dt

    if n == 0:
        new_state = SimState(frame=frame_new, time=frame_new * dt, ids=state.ids,
                             positions=state.positions, velocities=state.velocities,
                             radii=state.radii, pref_speeds=state.pref_speeds,
                             max_speeds=state.max_speeds, goals=state.goals,
                             goal_tols=state.goal_tols, class_codes=state.class_codes,
                             rng_state=state.rng_state)
        return new_state, None, np.inf, 0, 0, state.ids

    cell_size = config.neighbor_radius
    reach = int(math.ceil(config.neighbor_radius / cell_size))
    rad2 = config.neighbor_radius * config.neighbor_radius
    sorted_idx, ukeys, starts = _grid_arrays(state.positions, cell_size)
    des = _desired_velocities(state.positions, state.goals, state.pref_speeds, dt)
    fmat = config.responsibility.as_array()

    out_v = np.empty((n, 2), dtype=np.float64)
    out_status = np.empty(n, dtype=np.int64)
    out_failed = np.empty(n, dtype=np.int64)
    out_err = np.empty(n, dtype=np.int64)

    pos, vel = state.positions, state.velocities
    # Constraints are built as if every agent were margin/2 fatter; metrics and
    # logs keep true radii. Grazing contact then happens at the margin distance
    # and brief infeasibility episodes consume margin, not body.
    avoid_radii = state.radii + 0.5 * config.avoidance_margin

    def solve_runner(a, b):
        _kernels.frame_solve_range(
            pos, vel, avoid_radii, state.max_speeds, state.class_codes,
            state.ids, fmat, des, sorted_idx, ukeys, starts, cell_size, reach,
            rad2, config.max_neighbors, config.tau, dt, state.frame,
            out_v, out_status, out_failed, out_err, a, b)

    run_units(_agent_ranges(n, work_unit_steps, config.max_neighbors),
              worker_count, solve_runner)

    bad = np.flatnonzero(out_err >= 0)
    if bad.size:
        i = int(bad[0])
        j = int(out_err[i])
        raise ValueError(
            f"frame {frame_new}: agents {int(state.ids[i])} and {int(state.ids[j])} "
            "have exactly coincident centers; avoidance direction is undefined")

    fallback_count = int(np.count_nonzero(out_status))

    new_pos = pos + out_v * dt

    gd = state.goals - new_pos
    gdist = np.sqrt(gd[:, 0] * gd[:, 0] + gd[:, 1] * gd[:, 1])
    arrived = gdist <= state.goal_tols
    keep = ~arrived
    removed_ids = state.ids[arrived]

    log = None
    if record_log:
        log = FrameLog(frame=frame_new, time=frame_new * dt,
                       ids=state.ids.copy(),
                       classes=state.class_codes.astype(np.int8),
                       positions=new_pos.copy(), velocities=out_v.copy(),
                       radii=state.radii.copy())

    kept_pos = new_pos[keep]
    kept_ids = state.ids[keep]
    kept_radii = state.radii[keep]
    n2 = kept_pos.shape[0]

    min_sep = np.inf
    collisions = 0
    if n2 >= 2:
        m_sorted, m_ukeys, m_starts = _grid_arrays(kept_pos, cell_size)
        ranges = _agent_ranges(n2, work_unit_steps, config.max_neighbors)
        part_min = np.full(len(ranges), np.inf)
        part_cnt = np.zeros(len(ranges), dtype=np.int64)

        def metric_runner(u, a, b):
            part_min[u], part_cnt[u] = _kernels.min_sep_range(
                kept_pos, kept_radii, kept_ids, m_sorted, m_ukeys, m_starts,
                cell_size, reach, rad2, COLLISION_TOLERANCE, a, b)

        run_units([(u, a, b) for u, (a, b) in enumerate(ranges)],
                  worker_count, metric_runner)
        min_sep = float(part_min.min())
        collisions = int(part_cnt.sum())

    new_state = SimState(
        frame=frame_new, time=frame_new * dt, ids=kept_ids,
        positions=kept_pos, velocities=out_v[keep], radii=kept_radii,
        pref_speeds=state.pref_speeds[keep], max_speeds=state.max_speeds[keep],
        goals=state.goals[keep], goal_tols=state.goal_tols[keep],
        class_codes=state.class_codes[keep], rng_state=state.rng_state,
        lp_fallbacks=fallback_count)
    return new_state, log, min_sep, collisions, fallback_count, removed_ids


def step(state: SimState, config: ScenarioConfig, worker_count: int = 1,
         work_unit_steps: int = DEFAULT_WORK_UNIT_STEPS):
    """Advance one frame; returns (new_state, FrameMetrics)."""
    t0 = _time.perf_counter()
    new_state, _log, min_sep, collisions, _fb, _removed = _advance(
        state, config, worker_count, work_unit_steps, record_log=False)
    wall_ms = (_time.perf_counter() - t0) * 1e3
    metrics = FrameMetrics(frame=new_state.frame, wall_ms=wall_ms,
                           min_separation=min_sep, collision_count=collisions,
                           active_agents=new_state.active_count)
    return new_state, metrics


def run(config: ScenarioConfig, worker_count: int = 1,
        record_trajectories: bool = True,
        work_unit_steps: int = DEFAULT_WORK_UNIT_STEPS) -> RunResult:
    """Step until every agent reaches its goal or the frame guard trips.

    The returned summary marks non-termination via `terminated=False`."""
    state = init_state(config)
    agent_records = [
        {"id": int(state.ids[i]),
         "agent_class": AgentClass(int(state.class_codes[i])),
         "spawn": state.positions[i].copy(),
         "goal": state.goals[i].copy(),
         "radius": float(state.radii[i])}
        for i in range(state.active_count)]
    total_agents = state.active_count
    guard = config.frame_guard()

    logs: list[FrameLog] = []
    metrics: list[FrameMetrics] = []
    arrival: dict[int, float] = {}
    fallbacks = 0

    while state.active_count > 0 and state.frame < guard:
        t0 = _time.perf_counter()
        state, log, min_sep, collisions, fb, removed = _advance(
            state, config, worker_count, work_unit_steps, record_trajectories)
        wall_ms = (_time.perf_counter() - t0) * 1e3
        metrics.append(FrameMetrics(frame=state.frame, wall_ms=wall_ms,
                                    min_separation=min_sep,
                                    collision_count=collisions,
                                    active_agents=state.active_count))
        if log is not None:
            logs.append(log)
        for agent_id in removed:
            arrival[int(agent_id)] = state.time
        fallbacks += fb

    terminated = state.active_count == 0
    wall = np.array([m.wall_ms for m in metrics]) if metrics else np.zeros(1)
    class_of = {rec["id"]: rec["agent_class"] for rec in agent_records}
    travel: dict[AgentClass, float] = {}
    for cls in AgentClass:
        times = [t for agent_id, t in arrival.items() if class_of[agent_id] == cls]
        if times:
            travel[cls] = float(np.mean(times))

    summary = RunSummary(
        total_collisions=int(sum(m.collision_count for m in metrics)),
        min_separation=float(min((m.min_separation for m in metrics), default=np.inf)),
        mean_frame_ms=float(wall.mean()),
        p95_frame_ms=float(np.percentile(wall, 95)),
        agents=total_agents,
        seed=config.seed,
        frames=state.frame,
        terminated=terminated,
        arrived=len(arrival),
        total_fallbacks=fallbacks,
        mean_travel_time=travel)
    return RunResult(frame_logs=logs, frame_metrics=metrics, summary=summary,
                     agent_records=agent_records, final_state=state)

"""Scenario definition, reproducible spawn sampling, and trajectory/metric files.

Scenario files are YAML (schema documented in the README, versioned by
`format_version`). Trajectory files are CSV with one row per (frame, agent) and
full-precision floats, so write -> read is the identity on frame logs.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
import yaml

from .orca import AgentClass, AgentState, ResponsibilityMatrix

__all__ = [
    "ScenarioError",
    "ClassParams",
    "Region",
    "ScenarioConfig",
    "FrameLog",
    "load_scenario",
    "scenario_from_dict",
    "sample_spawns",
    "build_agents",
    "write_trajectories",
    "read_trajectories",
    "write_metrics_summary",
    "atomic_write_text",
]

FORMAT_VERSION = 1

TRAJECTORY_COLUMNS = ["frame", "time", "agent_id", "class", "x", "y", "vx", "vy", "radius"]
METRICS_COLUMNS = ["total_collisions", "min_separation", "mean_frame_ms",
                   "p95_frame_ms", "agents", "seed"]

DEFAULT_CLASS_PARAMS = {
    AgentClass.PEDESTRIAN: (0.25, 1.4, 2.0),
    AgentClass.VEHICLE: (1.0, 3.0, 5.0),
}

DEFAULTS = {
    "dt": 0.1,
    "tau": 2.0,
    "neighbor_radius": 15.0,
    "max_neighbors": 16,
    "clearance_time": 0.5,
    "avoidance_margin": 0.1,
    "seed": 0,
}

_SPAWN_ATTEMPTS_PER_POINT = 2000


class ScenarioError(ValueError):
    """Scenario validation failure; the message names the offending field."""


@dataclass
class ClassParams:
    radius: float
    pref_speed: float
    max_speed: float


@dataclass
class Region:
    spawn: tuple[float, float, float, float]
    goal: tuple[float, float, float, float]
    agent_class: AgentClass
    count: int


@dataclass
class ScenarioConfig:
    regions: list[Region]
    class_params: dict[AgentClass, ClassParams]
    responsibility: ResponsibilityMatrix
    dt: float = DEFAULTS["dt"]
    tau: float = DEFAULTS["tau"]
    neighbor_radius: float = DEFAULTS["neighbor_radius"]
    max_neighbors: int = DEFAULTS["max_neighbors"]
    goal_tolerance: float | None = None
    clearance_time: float = DEFAULTS["clearance_time"]
    avoidance_margin: float = DEFAULTS["avoidance_margin"]
    seed: int = DEFAULTS["seed"]
    max_frames: int | None = None
    warnings: list[str] = field(default_factory=list)

    def goal_tolerance_for(self, agent_class: AgentClass) -> float:
        if self.goal_tolerance is not None:
            return self.goal_tolerance
        return self.class_params[agent_class].radius

    def frame_guard(self) -> int:
        """max_frames, defaulting to a generous multiple of the straight-line
        crossing time over the scenario extent."""
        if self.max_frames is not None:
            return self.max_frames
        rects = [r.spawn for r in self.regions] + [r.goal for r in self.regions]
        if not rects:
            return 1
        xs = [r[0] for r in rects] + [r[2] for r in rects]
        ys = [r[1] for r in rects] + [r[3] for r in rects]
        diag = math.hypot(max(xs) - min(xs), max(ys) - min(ys))
        used = {r.agent_class for r in self.regions}
        min_pref = min(self.class_params[c].pref_speed for c in used)
        return max(1, int(100.0 * (diag / min_pref) / self.dt))


@dataclass
class FrameLog:
    """Positions and velocities of every agent active during one frame."""

    frame: int
    time: float
    ids: np.ndarray
    classes: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    radii: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, FrameLog):
            return NotImplemented
        return (self.frame == other.frame and self.time == other.time
                and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.classes, other.classes)
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.velocities, other.velocities)
                and np.array_equal(self.radii, other.radii))


# ---------------------------------------------------------------------------
# scenario loading / validation
# ---------------------------------------------------------------------------

def _require_number(data, key, where, positive=True, allow_none=False):
    value = data.get(key)
    if value is None and allow_none:
        return None
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ScenarioError(f"{where}.{key}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(f"{where}.{key}: must be finite")
    if positive and value <= 0:
        raise ScenarioError(f"{where}.{key}: must be positive, got {value}")
    return value


def _parse_rect(value, where):
    if (not isinstance(value, (list, tuple)) or len(value) != 4
            or any(not isinstance(v, (int, float)) or isinstance(v, bool) for v in value)):
        raise ScenarioError(f"{where}: expected [x0, y0, x1, y1]")
    x0, y0, x1, y1 = (float(v) for v in value)
    if not all(math.isfinite(v) for v in (x0, y0, x1, y1)):
        raise ScenarioError(f"{where}: coordinates must be finite")
    if x0 >= x1 or y0 >= y1:
        raise ScenarioError(f"{where}: rectangle is degenerate (need x0 < x1 and y0 < y1)")
    return (x0, y0, x1, y1)


def scenario_from_dict(data: dict, source: str = "<dict>") -> ScenarioConfig:
    """Validate a scenario mapping and fill defaults. Raises ScenarioError with
    field and location on any violation; an f-sum below the guarantee bound is
    recorded as a warning, not an error."""
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: scenario document must be a mapping")
    version = data.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ScenarioError(f"{source}.format_version: unsupported version {version!r}")

    known = {"format_version", "seed", "dt", "tau", "neighbor_radius",
             "max_neighbors", "goal_tolerance", "clearance_time",
             "avoidance_margin", "max_frames", "classes", "responsibility",
             "regions"}
    for key in data:
        if key not in known:
            raise ScenarioError(f"{source}.{key}: unknown field")

    dt = _require_number(data, "dt", source) if "dt" in data else DEFAULTS["dt"]
    tau = _require_number(data, "tau", source) if "tau" in data else DEFAULTS["tau"]
    neighbor_radius = (_require_number(data, "neighbor_radius", source)
                       if "neighbor_radius" in data else DEFAULTS["neighbor_radius"])
    clearance_time = (_require_number(data, "clearance_time", source, positive=False)
                      if "clearance_time" in data else DEFAULTS["clearance_time"])
    if clearance_time is not None and clearance_time < 0:
        raise ScenarioError(f"{source}.clearance_time: must be >= 0")
    goal_tolerance = _require_number(data, "goal_tolerance", source, allow_none=True)
    avoidance_margin = (_require_number(data, "avoidance_margin", source, positive=False)
                        if "avoidance_margin" in data else DEFAULTS["avoidance_margin"])
    if avoidance_margin < 0:
        raise ScenarioError(f"{source}.avoidance_margin: must be >= 0")

    max_neighbors = data.get("max_neighbors", DEFAULTS["max_neighbors"])
    if not isinstance(max_neighbors, int) or isinstance(max_neighbors, bool) or max_neighbors < 0:
        raise ScenarioError(f"{source}.max_neighbors: expected an integer >= 0")

    seed = data.get("seed", DEFAULTS["seed"])
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError(f"{source}.seed: expected an integer")

    max_frames = data.get("max_frames")
    if max_frames is not None and (not isinstance(max_frames, int)
                                   or isinstance(max_frames, bool) or max_frames < 1):
        raise ScenarioError(f"{source}.max_frames: expected an integer >= 1 or null")

    class_params = {c: ClassParams(*DEFAULT_CLASS_PARAMS[c]) for c in AgentClass}
    for name, raw in (data.get("classes") or {}).items():
        cls = _parse_class(name, f"{source}.classes")
        if not isinstance(raw, dict):
            raise ScenarioError(f"{source}.classes.{name}: expected a mapping")
        where = f"{source}.classes.{name}"
        params = class_params[cls]
        radius = _require_number(raw, "radius", where) if "radius" in raw else params.radius
        pref = _require_number(raw, "pref_speed", where) if "pref_speed" in raw else params.pref_speed
        maxs = _require_number(raw, "max_speed", where) if "max_speed" in raw else params.max_speed
        for key in raw:
            if key not in {"radius", "pref_speed", "max_speed"}:
                raise ScenarioError(f"{where}.{key}: unknown field")
        if pref > maxs:
            raise ScenarioError(f"{where}: pref_speed {pref} exceeds max_speed {maxs}")
        class_params[cls] = ClassParams(radius, pref, maxs)

    regions = []
    raw_regions = data.get("regions")
    if not isinstance(raw_regions, list):
        raise ScenarioError(f"{source}.regions: expected a list of regions")
    for i, raw in enumerate(raw_regions):
        where = f"{source}.regions[{i}]"
        if not isinstance(raw, dict):
            raise ScenarioError(f"{where}: expected a mapping")
        for key in raw:
            if key not in {"spawn", "goal", "agent_class", "count"}:
                raise ScenarioError(f"{where}.{key}: unknown field")
        spawn = _parse_rect(raw.get("spawn"), f"{where}.spawn")
        goal = _parse_rect(raw.get("goal"), f"{where}.goal")
        cls = _parse_class(raw.get("agent_class", "pedestrian"), f"{where}.agent_class")
        count = raw.get("count")
        if not isinstance(count, int) or isinstance(count, bool) or count < 0:
            raise ScenarioError(f"{where}.count: expected an integer >= 0")
        regions.append(Region(spawn, goal, cls, count))

    used = sorted({r.agent_class for r in regions}) or [AgentClass.PEDESTRIAN]
    matrix, warnings = _parse_responsibility(data.get("responsibility"), used, source)

    return ScenarioConfig(
        regions=regions, class_params=class_params, responsibility=matrix,
        dt=dt, tau=tau, neighbor_radius=neighbor_radius,
        max_neighbors=max_neighbors, goal_tolerance=goal_tolerance,
        clearance_time=clearance_time, avoidance_margin=avoidance_margin,
        seed=seed, max_frames=max_frames, warnings=warnings)


def _parse_class(name, where) -> AgentClass:
    if isinstance(name, AgentClass):
        return name
    if not isinstance(name, str):
        raise ScenarioError(f"{where}: expected an agent class name, got {name!r}")
    try:
        return AgentClass.from_label(name)
    except ValueError:
        valid = ", ".join(c.label for c in AgentClass)
        raise ScenarioError(f"{where}: unknown agent class {name!r} (valid: {valid})") from None


def _parse_responsibility(raw, used_classes, source):
    if raw is None:
        matrix = ResponsibilityMatrix.default()
    else:
        if not isinstance(raw, dict):
            raise ScenarioError(f"{source}.responsibility: expected a mapping like "
                                "'pedestrian|vehicle: 1.0'")
        entries = {}
        for key, value in raw.items():
            where = f"{source}.responsibility.{key}"
            if not isinstance(key, str) or key.count("|") != 1:
                raise ScenarioError(f"{where}: key must look like 'classA|classB'")
            a_name, b_name = key.split("|")
            a = _parse_class(a_name, where)
            b = _parse_class(b_name, where)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ScenarioError(f"{where}: expected a number in [0, 1]")
            value = float(value)
            if not 0.0 <= value <= 1.0:
                raise ScenarioError(f"{where}: fraction {value} outside [0, 1]")
            entries[(a, b)] = value
        matrix = ResponsibilityMatrix(entries)

    for a in used_classes:
        for b in used_classes:
            if (a, b) not in matrix.f:
                raise ScenarioError(
                    f"{source}.responsibility: missing entry {a.label}|{b.label} "
                    "for a class used by the regions")

    warnings = []
    for a, b in matrix.unguaranteed_pairs():
        if a in used_classes and b in used_classes:
            warnings.append(
                f"responsibility sum f[{a.label}|{b.label}] + f[{b.label}|{a.label}] "
                f"= {matrix.get(a, b) + matrix.get(b, a):g} < 1: "
                "collision-free motion is not guaranteed for this pair")
    return matrix, warnings


def load_scenario(path) -> ScenarioConfig:
    """Parse and validate a scenario file."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{path}: parse error: {exc}") from exc
    return scenario_from_dict(data, source=str(path))


# ---------------------------------------------------------------------------
# spawn sampling
# ---------------------------------------------------------------------------

def sample_spawns(region, count: int, radius: float, pref_speed: float,
                  clearance_time: float, rng: np.random.Generator,
                  existing=None) -> np.ndarray:
    """Rejection-sample `count` points uniformly in the rectangle with pairwise
    distance >= 2*radius + pref_speed*clearance_time.

    `existing` rows are (x, y, clearance_contribution) of already-placed agents
    (possibly of other classes); new points keep distance >= own_contribution +
    other_contribution from each of them, where a contribution is
    radius + pref_speed*clearance_time/2."""
    x0, y0, x1, y1 = (float(v) for v in region)
    if x0 >= x1 or y0 >= y1:
        raise ScenarioError(f"spawn region {region!r} is degenerate")
    if clearance_time < 0:
        raise ScenarioError("clearance_time must be >= 0")
    contrib = radius + pref_speed * clearance_time / 2.0
    min_dist = 2.0 * contrib

    area = (x1 - x0) * (y1 - y0)
    # Necessary-condition area check: even hexagonal packing cannot exceed
    # ~0.9069 disc coverage, so demand room for count discs of radius
    # min_dist/2 at that density.
    if count > 1 and count * math.pi * (min_dist / 2.0) ** 2 > 0.9069 * area:
        raise ScenarioError(
            f"region area {area:.3g} m^2 cannot hold {count} agents at minimum "
            f"spacing {min_dist:.3g} m")

    placed = np.empty((count, 2), dtype=np.float64)
    others = np.asarray(existing, dtype=np.float64) if existing is not None else None
    if others is not None and others.size == 0:
        others = None

    cell = min_dist if min_dist > 0 else 1.0
    occupied: dict[tuple[int, int], list[int]] = {}

    def ok(x, y):
        cx, cy = int(math.floor(x / cell)), int(math.floor(y / cell))
        for gx in range(cx - 1, cx + 2):
            for gy in range(cy - 1, cy + 2):
                for idx in occupied.get((gx, gy), ()):
                    if (x - placed[idx, 0]) ** 2 + (y - placed[idx, 1]) ** 2 < min_dist ** 2:
                        return False
        if others is not None:
            d2 = (others[:, 0] - x) ** 2 + (others[:, 1] - y) ** 2
            if np.any(d2 < (contrib + others[:, 2]) ** 2):
                return False
        return True

    for i in range(count):
        for _attempt in range(_SPAWN_ATTEMPTS_PER_POINT):
            x = x0 + (x1 - x0) * rng.random()
            y = y0 + (y1 - y0) * rng.random()
            if ok(x, y):
                break
        else:
            raise ScenarioError(
                f"could not place agent {i + 1} of {count} in region {region!r} "
                f"after {_SPAWN_ATTEMPTS_PER_POINT} attempts ({i} placed); "
                "the region is too dense for the requested spacing")
        placed[i] = (x, y)
        key = (int(math.floor(x / cell)), int(math.floor(y / cell)))
        occupied.setdefault(key, []).append(i)
    return placed


def sample_goal_points(region, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform goal points in the end region, drawn from the same stream as
    spawns so runs are reproducible from the scenario seed alone."""
    x0, y0, x1, y1 = (float(v) for v in region)
    pts = np.empty((count, 2), dtype=np.float64)
    for i in range(count):
        pts[i, 0] = x0 + (x1 - x0) * rng.random()
        pts[i, 1] = y0 + (y1 - y0) * rng.random()
    return pts


def build_agents(config: ScenarioConfig) -> list[AgentState]:
    """Spawn every region's agents deterministically from the config seed.

    Placement is chained across regions, so cross-region and cross-class pairs
    also respect the clearance rule; ids are assigned in region order."""
    rng = np.random.default_rng(config.seed)
    agents: list[AgentState] = []
    placed_rows: list[tuple[float, float, float]] = []
    next_id = 0
    for region in config.regions:
        params = config.class_params[region.agent_class]
        contrib = params.radius + params.pref_speed * config.clearance_time / 2.0
        spawns = sample_spawns(region.spawn, region.count, params.radius,
                               params.pref_speed, config.clearance_time, rng,
                               existing=placed_rows or None)
        goals = sample_goal_points(region.goal, region.count, rng)
        for i in range(region.count):
            agents.append(AgentState(
                id=next_id, position=spawns[i], velocity=np.zeros(2),
                radius=params.radius, pref_speed=params.pref_speed,
                max_speed=params.max_speed, goal=goals[i],
                agent_class=region.agent_class))
            placed_rows.append((spawns[i, 0], spawns[i, 1], contrib))
            next_id += 1
    return agents


# ---------------------------------------------------------------------------
# trajectory and metrics files
# ---------------------------------------------------------------------------

def atomic_write_text(path, write_fn):
    """Write via a temp file in the destination directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            write_fn(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectories(logs, path) -> None:
    """CSV, one row per (frame, agent), full-precision floats; re-reading
    reproduces the logs exactly."""
    def emit(f):
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_COLUMNS)
        for log in logs:
            frame = str(log.frame)
            time = repr(float(log.time))
            for i in range(len(log.ids)):
                writer.writerow([
                    frame, time, str(int(log.ids[i])),
                    AgentClass(int(log.classes[i])).label,
                    repr(float(log.positions[i, 0])), repr(float(log.positions[i, 1])),
                    repr(float(log.velocities[i, 0])), repr(float(log.velocities[i, 1])),
                    repr(float(log.radii[i])),
                ])
    atomic_write_text(path, emit)


def read_trajectories(path) -> list[FrameLog]:
    logs: list[FrameLog] = []
    rows: list[tuple] = []
    current = None

    def flush():
        if current is None:
            return
        frame, time = current
        ids = np.array([r[0] for r in rows], dtype=np.int64)
        classes = np.array([r[1] for r in rows], dtype=np.int8)
        pos = np.array([[r[2], r[3]] for r in rows], dtype=np.float64).reshape(-1, 2)
        vel = np.array([[r[4], r[5]] for r in rows], dtype=np.float64).reshape(-1, 2)
        radii = np.array([r[6] for r in rows], dtype=np.float64)
        logs.append(FrameLog(frame, time, ids, classes, pos, vel, radii))

    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected trajectory header {header!r}")
        for row in reader:
            frame = int(row[0])
            time = float(row[1])
            if current is None or current[0] != frame:
                flush()
                rows = []
                current = (frame, time)
            rows.append((int(row[2]), int(AgentClass.from_label(row[3])),
                         float(row[4]), float(row[5]), float(row[6]),
                         float(row[7]), float(row[8])))
    flush()
    return logs


def write_metrics_summary(summary, path) -> None:
    """One record per run: total collisions, min separation, mean/p95 frame
    milliseconds, agent count, seed."""
    def emit(f):
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        writer.writerow([
            str(int(summary.total_collisions)),
            repr(float(summary.min_separation)),
            repr(float(summary.mean_frame_ms)),
            repr(float(summary.p95_frame_ms)),
            str(int(summary.agents)),
            str(int(summary.seed)),
        ])
    atomic_write_text(path, emit)

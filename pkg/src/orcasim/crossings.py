"""Built-in 2-way and 4-way crossing scenario generators.

Opposing rectangular spawn/goal regions produce head-on streams (2-way) and
additionally side-on streams (4-way). Region size is derived from the agent
count and per-class spacing unless pinned explicitly, which controlled
experiments use to hold geometry fixed while varying the class mix.
"""

from __future__ import annotations

import math

from .orca import AgentClass
from .scenario import DEFAULT_CLASS_PARAMS, DEFAULTS, ScenarioConfig, scenario_from_dict

__all__ = ["two_way_dict", "four_way_dict", "crossing_config", "arm_size"]

# Spawn-area per agent, in units of squared per-class spacing. Sized so that
# even four converging streams keep the junction in the regime where the
# avoidance LP stays feasible (verified empirically up to 2,500 agents).
_AREA_FACTOR = 6.0
_MIN_SIDE = 8.0
_MAX_WIDTH = 120.0


def _spacing(agent_class: AgentClass, clearance_time: float) -> float:
    radius, pref, _ = DEFAULT_CLASS_PARAMS[agent_class]
    return 2.0 * radius + pref * clearance_time


def split_counts(per_arm: int, vehicle_fraction: float) -> tuple[int, int]:
    n_vehicles = int(round(per_arm * vehicle_fraction))
    return per_arm - n_vehicles, n_vehicles


def arm_size(per_arm: int, vehicle_fraction: float,
             clearance_time: float = DEFAULTS["clearance_time"],
             size_for_worst_class: bool = False) -> tuple[float, float]:
    """(width across the stream, depth along it) for one arm's rectangles."""
    n_ped, n_veh = split_counts(per_arm, vehicle_fraction)
    s_ped = _spacing(AgentClass.PEDESTRIAN, clearance_time)
    s_veh = _spacing(AgentClass.VEHICLE, clearance_time)
    if size_for_worst_class:
        worst = max(s_ped, s_veh)
        area = _AREA_FACTOR * per_arm * worst * worst
    else:
        area = _AREA_FACTOR * (n_ped * s_ped * s_ped + n_veh * s_veh * s_veh)
    area = max(area, _MIN_SIDE * _MIN_SIDE)
    width = min(_MAX_WIDTH, math.sqrt(area))
    depth = area / width
    return width, depth


def _arm_regions(width, depth, gap, axis, sign, n_ped, n_veh):
    """Spawn/goal region dicts for one arm; agents cross to the opposite side."""
    lo = gap / 2.0
    hi = lo + depth
    if axis == "x":
        spawn = [-sign * hi, -width / 2.0, -sign * lo, width / 2.0]
        goal = [sign * lo, -width / 2.0, sign * hi, width / 2.0]
    else:
        spawn = [-width / 2.0, -sign * hi, width / 2.0, -sign * lo]
        goal = [-width / 2.0, sign * lo, width / 2.0, sign * hi]
    spawn = [min(spawn[0], spawn[2]), min(spawn[1], spawn[3]),
             max(spawn[0], spawn[2]), max(spawn[1], spawn[3])]
    goal = [min(goal[0], goal[2]), min(goal[1], goal[3]),
            max(goal[0], goal[2]), max(goal[1], goal[3])]
    regions = []
    if n_ped:
        regions.append({"spawn": spawn, "goal": goal,
                        "agent_class": "pedestrian", "count": n_ped})
    if n_veh:
        regions.append({"spawn": spawn, "goal": goal,
                        "agent_class": "vehicle", "count": n_veh})
    return regions


def _base_dict(seed, overrides):
    data = {
        "format_version": 1,
        "seed": int(seed),
        "responsibility": {
            "pedestrian|pedestrian": 0.5,
            "vehicle|vehicle": 0.5,
            "pedestrian|vehicle": 1.0,
            "vehicle|pedestrian": 0.0,
        },
        "regions": [],
    }
    data.update(overrides)
    return data


def two_way_dict(per_side: int, vehicle_fraction: float = 0.0, seed: int = 0,
                 arm_width: float | None = None, arm_depth: float | None = None,
                 size_for_worst_class: bool = False, **overrides) -> dict:
    """Two opposing crowds crossing a shared corridor."""
    clearance = overrides.get("clearance_time", DEFAULTS["clearance_time"])
    width, depth = arm_size(per_side, vehicle_fraction, clearance,
                            size_for_worst_class) if per_side else (_MIN_SIDE, _MIN_SIDE)
    if arm_width is not None:
        width = arm_width
    if arm_depth is not None:
        depth = arm_depth
    gap = 24.0
    n_ped, n_veh = split_counts(per_side, vehicle_fraction)
    data = _base_dict(seed, overrides)
    for sign in (1, -1):
        data["regions"].extend(_arm_regions(width, depth, gap, "x", sign, n_ped, n_veh))
    return data


def four_way_dict(per_arm: int, vehicle_fraction: float = 0.0, seed: int = 0,
                  arm_width: float | None = None, arm_depth: float | None = None,
                  size_for_worst_class: bool = False, **overrides) -> dict:
    """Four crowds crossing one center: head-on and side-on avoidance."""
    clearance = overrides.get("clearance_time", DEFAULTS["clearance_time"])
    width, depth = arm_size(per_arm, vehicle_fraction, clearance,
                            size_for_worst_class) if per_arm else (_MIN_SIDE, _MIN_SIDE)
    if arm_width is not None:
        width = arm_width
    if arm_depth is not None:
        depth = arm_depth
    # Keep perpendicular arms' rectangles disjoint.
    gap = max(24.0, width + 8.0)
    n_ped, n_veh = split_counts(per_arm, vehicle_fraction)
    data = _base_dict(seed, overrides)
    for axis in ("x", "y"):
        for sign in (1, -1):
            data["regions"].extend(
                _arm_regions(width, depth, gap, axis, sign, n_ped, n_veh))
    return data


def crossing_config(kind: str, per_arm: int, vehicle_fraction: float = 0.0,
                    seed: int = 0, **kwargs) -> ScenarioConfig:
    if kind == "two_way":
        data = two_way_dict(per_arm, vehicle_fraction, seed, **kwargs)
    elif kind == "four_way":
        data = four_way_dict(per_arm, vehicle_fraction, seed, **kwargs)
    else:
        raise ValueError(f"unknown crossing kind {kind!r} (expected two_way or four_way)")
    return scenario_from_dict(data, source=f"<{kind} crossing>")

"""Uniform-grid spatial index for nearest-neighbor queries.

The grid is rebuilt from scratch each frame (sparse mapping, unbounded
extents); queries scan the ring of cells covering the query radius and return
the nearest agents sorted by (distance, id).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .orca import AgentState

__all__ = ["UniformGrid", "rebuild", "query_neighbors"]

ORIGIN = (0.0, 0.0)


@dataclass
class UniformGrid:
    cell_size: float
    origin: tuple[float, float] = ORIGIN
    cells: dict[tuple[int, int], list[int]] = field(default_factory=dict)
    population: int = 0

    def cell_of(self, position) -> tuple[int, int]:
        return (int(math.floor((position[0] - self.origin[0]) / self.cell_size)),
                int(math.floor((position[1] - self.origin[1]) / self.cell_size)))


def rebuild(agents, cell_size: float) -> UniformGrid:
    """Fresh grid with every agent in exactly one cell; content is independent
    of the input order (cells hold ids in encounter order)."""
    cell_size = float(cell_size)
    if not np.isfinite(cell_size) or cell_size <= 0:
        raise ValueError(f"cell_size must be positive, got {cell_size!r}")
    grid = UniformGrid(cell_size=cell_size)
    for agent in agents:
        p = agent.position
        if not (np.isfinite(p[0]) and np.isfinite(p[1])):
            raise ValueError(f"agent {agent.id}: non-finite position")
        grid.cells.setdefault(grid.cell_of(p), []).append(agent.id)
        grid.population += 1
    return grid


def query_neighbors(grid: UniformGrid, agents, self_id, radius: float,
                    max_count: int) -> list[AgentState]:
    """Up to max_count nearest agents within `radius` of agent self_id,
    excluding self, sorted ascending by distance then id."""
    radius = float(radius)
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    if max_count < 0:
        raise ValueError(f"max_count must be >= 0, got {max_count}")
    by_id = {a.id: a for a in agents}
    if self_id not in by_id:
        raise KeyError(f"unknown agent id {self_id!r}")
    me = by_id[self_id]
    if max_count == 0:
        return []

    cx, cy = grid.cell_of(me.position)
    reach = int(math.ceil(radius / grid.cell_size))
    rad2 = radius * radius
    found = []
    for gx in range(cx - reach, cx + reach + 1):
        for gy in range(cy - reach, cy + reach + 1):
            for other_id in grid.cells.get((gx, gy), ()):
                if other_id == self_id:
                    continue
                other = by_id[other_id]
                dx = other.position[0] - me.position[0]
                dy = other.position[1] - me.position[1]
                d2 = dx * dx + dy * dy
                if d2 > rad2:
                    continue
                found.append((d2, other_id, other))
    found.sort(key=lambda item: (item[0], item[1]))
    return [other for _, _, other in found[:max_count]]

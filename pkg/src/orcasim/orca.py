"""ORCA half-plane construction with per-class-pair responsibility fractions.

Each neighbor induces one half-plane of permitted velocities. The plane passes
through v_opt + f * u, where v_opt is the agent's current velocity, u is the
shortest exit from the velocity obstacle, and f is the fraction of the
avoidance this agent takes on against that neighbor's class. Construction is
the same operation sequence for every class pair; only the scalar f differs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _kernels
from .lp import HalfPlaneConstraint

__all__ = [
    "AgentClass",
    "AgentState",
    "ResponsibilityMatrix",
    "VoExit",
    "compute_vo_exit",
    "build_orca_halfplane",
    "gather_constraints",
]


class AgentClass(IntEnum):
    PEDESTRIAN = 0
    VEHICLE = 1

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "AgentClass":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown agent class {label!r}") from None


@dataclass
class AgentState:
    """Snapshot of one simulated entity."""

    id: int
    position: np.ndarray
    velocity: np.ndarray
    radius: float
    pref_speed: float
    max_speed: float
    goal: np.ndarray
    agent_class: AgentClass = AgentClass.PEDESTRIAN

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        self.radius = float(self.radius)
        self.pref_speed = float(self.pref_speed)
        self.max_speed = float(self.max_speed)
        self.agent_class = AgentClass(self.agent_class)
        if self.radius <= 0:
            raise ValueError(f"agent {self.id}: radius must be positive")
        if not 0 < self.pref_speed <= self.max_speed:
            raise ValueError(
                f"agent {self.id}: need 0 < pref_speed <= max_speed, "
                f"got {self.pref_speed}/{self.max_speed}")


@dataclass
class ResponsibilityMatrix:
    """Avoidance fractions f[(A, B)]: the share of the exit displacement an
    agent of class A applies when avoiding class B.

    Collision-free motion is guaranteed for a pair when f[A,B] + f[B,A] >= 1;
    smaller sums are permitted but queryable via unguaranteed_pairs()."""

    f: dict[tuple[AgentClass, AgentClass], float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (a, b), value in self.f.items():
            value = float(value)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"responsibility f[{a},{b}] = {value} outside [0, 1]")
            clean[(AgentClass(a), AgentClass(b))] = value
        self.f = clean

    @classmethod
    def default(cls) -> "ResponsibilityMatrix":
        """Reciprocal halves within a class; pedestrians fully avoid vehicles."""
        P, V = AgentClass.PEDESTRIAN, AgentClass.VEHICLE
        return cls({(P, P): 0.5, (V, V): 0.5, (P, V): 1.0, (V, P): 0.0})

    def get(self, a: AgentClass, b: AgentClass) -> float:
        try:
            return self.f[(AgentClass(a), AgentClass(b))]
        except KeyError:
            raise KeyError(f"responsibility matrix has no entry for ({a}, {b})") from None

    def guarantee_holds(self, a: AgentClass, b: AgentClass) -> bool:
        return self.get(a, b) + self.get(b, a) >= 1.0

    def unguaranteed_pairs(self) -> list[tuple[AgentClass, AgentClass]]:
        """Unordered class pairs whose f-sum falls below the guarantee bound."""
        seen = set()
        out = []
        for (a, b) in self.f:
            key = (min(a, b), max(a, b))
            if key in seen or (b, a) not in self.f:
                continue
            seen.add(key)
            if not self.guarantee_holds(a, b):
                out.append(key)
        return out

    def as_array(self) -> np.ndarray:
        """Dense lookup table indexed by (class code, class code) for kernels."""
        n = max(int(c) for c in AgentClass) + 1
        arr = np.zeros((n, n), dtype=np.float64)
        for (a, b), value in self.f.items():
            arr[int(a), int(b)] = value
        return arr


@dataclass
class VoExit:
    """Shortest displacement from the relative velocity to the velocity-obstacle
    boundary, plus the outward unit normal at that boundary point."""

    u: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.normal = np.asarray(self.normal, dtype=float)


def compute_vo_exit(rel_position, rel_velocity, combined_radius: float,
                    tau: float, dt: float) -> VoExit:
    """Exit vector for the truncated-cone velocity obstacle with lookahead tau.

    When the agents already overlap (|rel_position| < combined_radius) the
    obstacle is replaced by the dt-horizon disc so the exit resolves the
    penetration within one step."""
    rp = np.asarray(rel_position, dtype=float).reshape(2)
    rv = np.asarray(rel_velocity, dtype=float).reshape(2)
    if not (np.all(np.isfinite(rp)) and np.all(np.isfinite(rv))):
        raise ValueError("non-finite relative position or velocity")
    combined_radius = float(combined_radius)
    tau = float(tau)
    dt = float(dt)
    if combined_radius <= 0 or tau <= 0 or dt <= 0:
        raise ValueError("combined_radius, tau and dt must all be positive")
    ux, uy, nx, ny, ok = _kernels.vo_exit(rp[0], rp[1], rv[0], rv[1],
                                          combined_radius, tau, dt)
    if not ok:
        raise ValueError("coincident agent centers: exit direction is undefined")
    return VoExit(np.array([ux, uy]), np.array([nx, ny]))


def build_orca_halfplane(self_agent: AgentState, other: AgentState, f: float,
                         tau: float, dt: float) -> HalfPlaneConstraint:
    """Half-plane of velocities that keeps self clear of `other` for time tau,
    taking fraction f of the avoidance."""
    if self_agent.id == other.id:
        raise ValueError(f"agent {self_agent.id}: cannot avoid itself")
    f = float(f)
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"responsibility fraction {f} outside [0, 1]")
    exit_ = compute_vo_exit(other.position - self_agent.position,
                            self_agent.velocity - other.velocity,
                            self_agent.radius + other.radius, tau, dt)
    return HalfPlaneConstraint(point=self_agent.velocity + f * exit_.u,
                               normal=exit_.normal)


def gather_constraints(self_agent: AgentState, neighbors, matrix: ResponsibilityMatrix,
                       tau: float, dt: float) -> list[HalfPlaneConstraint]:
    """One constraint per neighbor, order-aligned with the neighbor list (which
    the caller supplies sorted by ascending distance, ties by id)."""
    constraints = []
    for other in neighbors:
        f = matrix.get(self_agent.agent_class, other.agent_class)
        try:
            constraints.append(build_orca_halfplane(self_agent, other, f, tau, dt))
        except ValueError as exc:
            raise ValueError(f"neighbor {other.id}: {exc}") from exc
    return constraints

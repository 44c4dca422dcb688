"""orcasim: deterministic shared-space crowd and autonomous-vehicle simulation.

ORCA velocity-obstacle steering with per-class-pair avoidance responsibility
fractions, a batch low-dimensional linear-program solver, a uniform-grid
neighbor index, and a synchronous headless engine.
"""

from .lp import (HalfPlaneConstraint, LpProblem, LpResult, LpStatus,
                 solve_batch, solve_closest_point, solve_least_penetration)
from .orca import (AgentClass, AgentState, ResponsibilityMatrix, VoExit,
                   build_orca_halfplane, compute_vo_exit, gather_constraints)
from .grid import UniformGrid, query_neighbors, rebuild
from .scenario import (FrameLog, ScenarioConfig, ScenarioError, build_agents,
                       load_scenario, read_trajectories, sample_spawns,
                       scenario_from_dict, write_metrics_summary,
                       write_trajectories)
from .engine import (FrameMetrics, RunResult, RunSummary, SimState,
                     desired_velocity, init_state, problem_seed, run, step)
from .crossings import crossing_config, four_way_dict, two_way_dict
from .bench import BenchReport, BenchRow, run_bench, write_bench_report

__version__ = "0.1.0"

__all__ = [
    "AgentClass", "AgentState", "BenchReport", "BenchRow", "FrameLog",
    "FrameMetrics", "HalfPlaneConstraint", "LpProblem", "LpResult", "LpStatus",
    "ResponsibilityMatrix", "RunResult", "RunSummary", "ScenarioConfig",
    "ScenarioError", "SimState", "UniformGrid", "VoExit", "build_agents",
    "build_orca_halfplane", "compute_vo_exit", "crossing_config",
    "desired_velocity", "four_way_dict", "gather_constraints", "init_state",
    "load_scenario", "problem_seed", "query_neighbors", "read_trajectories",
    "rebuild", "run", "run_bench", "sample_spawns", "scenario_from_dict",
    "solve_batch", "solve_closest_point", "solve_least_penetration", "step",
    "two_way_dict", "write_bench_report", "write_metrics_summary",
    "write_trajectories",
]

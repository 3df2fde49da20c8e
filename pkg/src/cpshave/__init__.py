"""Game-theoretic engine for coincident-peak demand-charge shaving."""

from .benchmark import BenchmarkReport, benchmark, centralized_solve, efficiency_loss, peak_ratio
from .closed_form import EquilibriumResult, multi_agent_ne, solve_ne, two_agent_ne, verify_ne
from .dynamics import SolverConfig, Trajectory, solve
from .game_core import (
    Agent,
    Capability,
    GameInstance,
    GameType,
    InputError,
    canonicalize,
    classify_game,
    derive_points,
)

__all__ = [
    "Agent", "BenchmarkReport", "Capability", "EquilibriumResult", "GameInstance", "GameType",
    "InputError", "SolverConfig", "Trajectory", "benchmark", "canonicalize", "centralized_solve",
    "classify_game", "derive_points", "efficiency_loss", "multi_agent_ne", "peak_ratio", "solve",
    "solve_ne", "two_agent_ne", "verify_ne",
]

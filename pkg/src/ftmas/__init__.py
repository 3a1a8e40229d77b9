"""Executable model of a fault-tolerant multi-robot cleaning system.

``kernel`` runs guarded events, ``model`` defines the robots/stations system,
``checker`` explores it exhaustively, ``sim`` drives seeded randomized runs
and ``cli`` ties them together.
"""
from .checker import check_refinement, explore, goal_reachability
from .model import build_machine, initial_state
from .scenario import load_scenario, parse_scenario
from .sim import batch, run

__all__ = [
    "batch",
    "build_machine",
    "check_refinement",
    "explore",
    "goal_reachability",
    "initial_state",
    "load_scenario",
    "parse_scenario",
    "run",
]

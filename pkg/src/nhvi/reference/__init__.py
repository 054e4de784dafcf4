from .catalog import BuiltinSystem, ChaplyginChart, builtin_systems, get_system, initial_pair
from .oracle import ContinuousSystem, Invariant, ReferenceSolution, accelerations, solve_reference

__all__ = [
    "BuiltinSystem",
    "ChaplyginChart",
    "ContinuousSystem",
    "Invariant",
    "ReferenceSolution",
    "accelerations",
    "builtin_systems",
    "get_system",
    "initial_pair",
    "solve_reference",
]

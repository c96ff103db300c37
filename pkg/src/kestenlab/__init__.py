"""Simulation lab for Kesten's tree and simple random walk on it."""

from .analysis import ScalingFunctions, fit_loglog, tail_index, theoretical_exponents
from .branching import build_survival_table, simulate_conditioned_path, u_function
from .electric import expected_exit_time, resistance_to_shell
from .offspring import BinomialCritical, CanonicalStable, FiniteSupport, GeometricCritical, parse_law
from .tree import KestenTree
from .walk import WalkEngine, return_probability_exact, run_walk

__all__ = [
    "BinomialCritical",
    "CanonicalStable",
    "FiniteSupport",
    "GeometricCritical",
    "KestenTree",
    "ScalingFunctions",
    "WalkEngine",
    "build_survival_table",
    "expected_exit_time",
    "fit_loglog",
    "parse_law",
    "resistance_to_shell",
    "return_probability_exact",
    "run_walk",
    "simulate_conditioned_path",
    "tail_index",
    "theoretical_exponents",
    "u_function",
]

__version__ = "0.1.0"

"""Cut-pursuit: working-set minimization of ``f + sum g_v + weighted graph TV``."""

from .direction import (
    steepest_binary_direction,
    steepest_ternary_direction,
    steepest_ternary_two_cuts,
)
from .driver import Solution, SolveOptions, cut_pursuit
from .functional import (
    BoxIndicator,
    NonnegIndicator,
    ProblemSpec,
    QuadraticFidelity,
    Separable,
    WeightedAbs,
    WeightedAbsPlusNonneg,
    Zero,
    dir_deriv,
    objective,
)
from .graph import Partition, WeightedGraph, chain_graph, grid_graph
from .multidim import KLFidelity, MultiProblemSpec, cut_pursuit_multidim
from .reduced import baseline_solve, solve_reduced

__all__ = [
    "WeightedGraph",
    "Partition",
    "chain_graph",
    "grid_graph",
    "ProblemSpec",
    "QuadraticFidelity",
    "Separable",
    "Zero",
    "WeightedAbs",
    "NonnegIndicator",
    "WeightedAbsPlusNonneg",
    "BoxIndicator",
    "objective",
    "dir_deriv",
    "steepest_ternary_direction",
    "steepest_ternary_two_cuts",
    "steepest_binary_direction",
    "solve_reduced",
    "baseline_solve",
    "SolveOptions",
    "Solution",
    "cut_pursuit",
    "MultiProblemSpec",
    "KLFidelity",
    "cut_pursuit_multidim",
]

__version__ = "0.1.0"

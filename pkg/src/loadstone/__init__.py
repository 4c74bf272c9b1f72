"""Inverse source recovery for a loaded fourth-order mixed-type equation.

The solution is expanded in sine modes in y; each mode is discretized by
finite differences in (x, t) with gamma-nonlocal time conditions, and the
mode coupling through the trace plane y = ell0 is resolved by successive
approximations with a vanishing fifth-order regularization.
"""

__version__ = "0.1.0"

from .expr import parse, evaluate, differentiate, ExprError, ExprSyntaxError  # noqa: E402
from .grid import Grid, build_grid, grid_from_nodes  # noqa: E402
from .problem import ProblemSpec, ProblemError, check_conditions, compute_lambda  # noqa: E402
from .spectral import ModeSet, ModeState, analyze, synthesize  # noqa: E402
from .fd_operator import assemble, apply  # noqa: E402
from .solver import run_picard, epsilon_continuation  # noqa: E402
from .pipeline import (  # noqa: E402
    InverseSolution, solve_inverse, solve_forward, manufactured_case, compute_Phi0,
    reconstruct_h, trace_residual,
)

__all__ = [
    "parse", "evaluate", "differentiate", "ExprError", "ExprSyntaxError",
    "Grid", "build_grid", "grid_from_nodes",
    "ProblemSpec", "ProblemError", "check_conditions", "compute_lambda",
    "ModeSet", "ModeState", "analyze", "synthesize",
    "assemble", "apply", "run_picard", "epsilon_continuation",
    "InverseSolution", "solve_inverse", "solve_forward", "manufactured_case",
    "compute_Phi0", "reconstruct_h", "trace_residual",
]

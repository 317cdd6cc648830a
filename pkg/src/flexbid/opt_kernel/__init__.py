"""Linear and mixed-integer programming kernel."""

from .lpformat import dumps, write_lp
from .model import (BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, Basis, Model, ModelArrays,
                    Solution)
from .solvers import BACKENDS, INT_TOL, COARSE_REL_GAP, solve_lp, solve_mip

__all__ = [
    "BINARY", "CONTINUOUS", "INTEGER", "EQ", "GE", "LE",
    "Basis", "Model", "ModelArrays", "Solution",
    "solve_lp", "solve_mip", "dumps", "write_lp",
    "BACKENDS", "INT_TOL", "COARSE_REL_GAP",
]

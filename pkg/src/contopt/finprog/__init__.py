"""Finite programs and the bundled desk-scale solvers."""

from .program import (
    FiniteProgram,
    Row,
    Solution,
    VarSpec,
    eval_expr,
    eval_program,
    export_json,
    import_json,
    is_linear,
    linear_coeffs,
    max_violation,
    program_kind,
)
from .simplex import solve_lp
from .bnb import solve_mip
from .nlp import solve_nlp
from .solve import solve

__all__ = [
    "FiniteProgram", "Row", "Solution", "VarSpec",
    "eval_expr", "eval_program", "export_json", "import_json",
    "is_linear", "linear_coeffs", "max_violation", "program_kind",
    "solve_lp", "solve_mip", "solve_nlp", "solve",
]

"""Front door for finite programs: classify, dispatch, post-check."""

from __future__ import annotations

from ..errors import Unsolved
from .bnb import solve_mip
from .nlp import solve_nlp
from .program import max_violation, program_kind
from .simplex import solve_lp


def solve(p, **options):
    """Solve a finite program with the solver its structure calls for.

    Linear programs go to the simplex, mixed-integer linear programs to
    branch and bound, smooth nonlinear programs to the augmented
    Lagrangian loop. Mixed-integer nonlinear programs have no bundled
    solver and raise Unsolved. Keyword options are forwarded to the
    backend. The returned Solution always carries the worst constraint
    or bound violation at its point.
    """
    kind = program_kind(p)
    if kind == "lp":
        sol = solve_lp(p, **options)
    elif kind == "mip":
        sol = solve_mip(p, **options)
    elif kind == "nlp":
        sol = solve_nlp(p, **options)
    else:
        raise Unsolved(
            "no bundled solver handles mixed-integer nonlinear programs; "
            "fix the discrete variables or linearize the model")
    if sol.x is not None and sol.violation is None:
        sol.violation = max_violation(p, sol.x)
    return sol

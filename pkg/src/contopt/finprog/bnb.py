"""Branch and bound over the bundled simplex for mixed-integer programs.

Best-first search with most-fractional branching: the open node with
the lowest inherited bound is expanded next, ties going to the deeper
node so the search still dives toward incumbents. Every node is a full
LP solve with tightened variable bounds, so fixed binaries shrink to
constants inside the simplex rewrite and the node LPs get cheaper as
the tree deepens.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import replace

from ..errors import TooManyBinaries
from .program import FiniteProgram, Solution, effective_bounds
from .simplex import solve_lp

INT_TOL = 1e-6
BOUND_TOL = 1e-12


def _discrete_indices(p):
    return [j for j, v in enumerate(p.variables) if v.integrality != "continuous"]


def solve_mip(p, max_nodes=10000, discrete_cap=30, int_tol=INT_TOL):
    """Solve a mixed-integer linear program exactly at desk scale.

    Problems with more than discrete_cap integer or binary variables are
    refused up front (raise the cap deliberately if the instance really
    needs it). Returns a Solution with status "optimal", "infeasible",
    "unbounded", or "node-limit"; nodes counts LP solves and gap is the
    absolute bound gap still open at termination.
    """
    discrete = _discrete_indices(p)
    if len(discrete) > discrete_cap:
        raise TooManyBinaries(
            f"{len(discrete)} discrete variables exceed the cap of {discrete_cap}; "
            "pass a larger discrete_cap if this size is intended")
    if not discrete:
        sol = solve_lp(p)
        sol.nodes = 1
        if sol.status == "optimal":
            sol.gap = 0.0
        return sol

    incumbent = None
    incumbent_obj = math.inf
    nodes = 0
    iterations = 0
    seq = 0
    # heap entries: (inherited bound, -depth, insertion order, overlay dict)
    heap = [(-math.inf, 0, 0, {})]
    unbounded_root = False

    while heap:
        if nodes >= max_nodes:
            break
        parent_bound, ndepth, _, overlay = heapq.heappop(heap)
        if parent_bound >= incumbent_obj - BOUND_TOL:
            continue
        specs = list(p.variables)
        for j, (lo, hi) in overlay.items():
            specs[j] = replace(specs[j], lb=lo, ub=hi)
        sol = solve_lp(FiniteProgram(specs, p.objective, p.constraints))
        nodes += 1
        iterations += sol.iterations or 0
        if sol.status == "infeasible":
            continue
        if sol.status == "unbounded":
            # an unbounded relaxation at the root means the MIP itself is
            # unbounded or infeasible; report the relaxation verdict
            if not overlay:
                unbounded_root = True
                break
            continue
        if sol.status != "optimal":
            continue
        if sol.objective >= incumbent_obj - BOUND_TOL:
            continue
        fracs = [(j, sol.x[j] - math.floor(sol.x[j])) for j in discrete]
        split = [(j, f) for j, f in fracs if min(f, 1.0 - f) > int_tol]
        if not split:
            # near-integral: pin the discrete block and re-solve once so the
            # incumbent carries exact integers, not values off by int_tol
            pinned = list(specs)
            for j in discrete:
                v = float(round(sol.x[j]))
                pinned[j] = replace(pinned[j], lb=v, ub=v)
            fixed = solve_lp(FiniteProgram(pinned, p.objective, p.constraints))
            nodes += 1
            iterations += fixed.iterations or 0
            if fixed.status == "optimal" and fixed.objective < incumbent_obj:
                incumbent = fixed
                incumbent_obj = fixed.objective
            elif sol.objective < incumbent_obj:
                incumbent = sol
                incumbent_obj = sol.objective
            continue
        j, f = max(split, key=lambda jf: min(jf[1], 1.0 - jf[1]))
        base = math.floor(sol.x[j])
        lo, hi = overlay.get(j, effective_bounds(p.variables[j]))
        down = (j, (lo, min(hi, float(base))))
        up = (j, (max(lo, float(base + 1)), hi))
        children = [down, up] if f < 0.5 else [up, down]
        # push the far side first so the near side is explored next
        for jj, (nlo, nhi) in reversed(children):
            if nlo > nhi:
                continue
            child = dict(overlay)
            child[jj] = (nlo, nhi)
            stack.append((child, sol.objective))

    if unbounded_root:
        return Solution(status="unbounded", nodes=nodes, iterations=iterations)
    open_bound = min((b for _, b in stack), default=math.inf)
    if incumbent is None:
        if stack:
            return Solution(status="node-limit", nodes=nodes, iterations=iterations)
        return Solution(status="infeasible", nodes=nodes, iterations=iterations)
    gap = 0.0 if not stack else max(0.0, incumbent_obj - open_bound)
    status = "optimal" if not stack else "node-limit"
    x = incumbent.x.copy()
    for j in discrete:
        x[j] = round(x[j])
    return Solution(status=status, x=x, objective=incumbent_obj,
                    gap=gap, nodes=nodes, iterations=iterations)

"""Augmented Lagrangian solver for smooth nonlinear programs.

Constraints are folded into a smooth penalty (quadratic for equalities,
squared-plus for inequalities), the bound-constrained inner problem is
minimized with L-BFGS-B, and multipliers are updated between inner
solves. The penalty weight grows tenfold whenever an outer round fails
to cut infeasibility by four. All residual and gradient work runs on
the vectorized tape from compiled.py, one forward and one reverse sweep
per inner iteration.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize

from ..errors import NonDifferentiable
from ..expressions import Unary, topo_order
from .compiled import Compiled
from .program import Solution, effective_bounds

KKT_TOL = 1e-6
FEAS_TOL = 1e-7
RHO0 = 10.0
RHO_GROWTH = 10.0
RHO_MAX = 1e8  # beyond this the inner problem is too stiff to polish
SHRINK = 0.25
MAX_OUTER = 50
BIG = 1e30


def _reject_abs(exprs):
    for e in exprs:
        for node in topo_order(e):
            if isinstance(node, Unary) and node.op == "abs":
                raise NonDifferentiable(
                    "absolute value has no derivative at zero; "
                    "reformulate with an auxiliary variable and two inequalities")


def _start_point(p):
    x0 = np.empty(p.n)
    for j, spec in enumerate(p.variables):
        lo, hi = effective_bounds(spec)
        if spec.start is not None:
            x0[j] = min(max(spec.start, lo), hi)
        elif math.isfinite(lo) and math.isfinite(hi):
            x0[j] = 0.5 * (lo + hi)
        else:
            x0[j] = min(max(0.0, lo), hi)
    return x0


def solve_nlp(p, x0=None, max_outer=MAX_OUTER, tol_kkt=KKT_TOL, tol_feas=FEAS_TOL):
    """Find a KKT point of a smooth nonlinear program.

    Starts from x0 if given, else each variable's start value, else the
    midpoint of finite bounds, else zero clipped into the bounds. On
    status "optimal" the point satisfies max violation <= tol_feas and
    projected-gradient stationarity <= tol_kkt; duals follow the same
    row orientation as solve_lp. Status "iteration-limit" reports the
    best point reached.
    """
    exprs = ([p.objective] if p.objective is not None else []) + \
        [r.expr for r in p.constraints]
    _reject_abs(exprs)
    has_obj = p.objective is not None
    m = p.m
    rows = p.constraints
    rhs = np.array([r.rhs for r in rows])
    # orient every row as residual(x) <= 0 or == 0: value - rhs for <= and ==,
    # rhs - value for >=
    orient = np.array([-1.0 if r.relation == ">=" else 1.0 for r in rows])
    is_eq = np.array([r.relation == "==" for r in rows], dtype=bool)
    is_in = ~is_eq

    comp = Compiled(([p.objective] if has_obj else []) + [r.expr for r in rows], p.n)
    pairs = [effective_bounds(v) for v in p.variables]
    lb = np.array([lo for lo, _ in pairs])
    ub = np.array([hi for _, hi in pairs])
    x = _start_point(p) if x0 is None else np.minimum(np.maximum(np.asarray(
        x0, dtype=float), lb), ub)

    lam = np.zeros(int(is_eq.sum()))
    mu = np.zeros(int(is_in.sum()))
    rho = RHO0
    total_inner = 0

    def residuals(vals):
        body = vals[1:] if has_obj else vals
        return orient * (body - rhs)

    def al_fun(xx, lam, mu, rho):
        vals = comp.values(xx)
        f = vals[0] if has_obj else 0.0
        r = residuals(vals)
        re, ri = r[is_eq], r[is_in]
        shifted = np.maximum(0.0, mu + rho * ri)
        val = f + lam @ re + 0.5 * rho * (re @ re) \
            + ((shifted @ shifted) - (mu @ mu)) / (2.0 * rho)
        w = np.zeros(m)
        w[is_eq] = lam + rho * re
        w[is_in] = shifted
        weights = np.concatenate([[1.0], w * orient]) if has_obj else w * orient
        _, g = comp.values_and_vjp(xx, weights)
        if not np.isfinite(val):
            return BIG, np.zeros_like(xx)
        g = np.where(np.isfinite(g), g, 0.0)
        return float(val), g

    def multiplier_estimates(r):
        le = lam + rho * r[is_eq]
        me = np.maximum(0.0, mu + rho * r[is_in])
        return le, me

    def kkt_residual(xx, le, me):
        w = np.zeros(m)
        w[is_eq] = le
        w[is_in] = me
        weights = np.concatenate([[1.0], w * orient]) if has_obj else w * orient
        _, g = comp.values_and_vjp(xx, weights)
        proj = xx - np.minimum(np.maximum(xx - g, lb), ub)
        return float(np.abs(proj).max(initial=0.0))

    bounds = list(zip(lb, ub))
    viol_prev = math.inf
    best = None
    for outer in range(max_outer):
        # ftol below machine precision: stop on the projected gradient or
        # the iteration cap, never on a flat stretch of the penalty value
        res = minimize(al_fun, x, args=(lam, mu, rho), jac=True,
                       method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 2000, "ftol": 1e-16,
                                "gtol": min(1e-9, 0.1 * tol_kkt)})
        x = np.minimum(np.maximum(res.x, lb), ub)
        total_inner += int(res.nit)
        vals = comp.values(x)
        r = residuals(vals)
        viol = max(
            float(np.abs(r[is_eq]).max(initial=0.0)),
            float(np.maximum(0.0, r[is_in]).max(initial=0.0)))
        le, me = multiplier_estimates(r)
        rk = kkt_residual(x, le, me)
        f = float(vals[0]) if has_obj else 0.0
        state = (x.copy(), f, viol, rk, le.copy(), me.copy())
        if best is None or (viol, rk) < (best[2], best[3]):
            best = state
        if viol <= tol_feas and rk <= tol_kkt:
            return _pack(p, state, "optimal", is_eq, is_in, total_inner)
        lam, mu = le, me
        # near the feasibility target the multiplier updates must finish
        # the job at fixed rho: growing it further only stiffens the
        # inner problem until the quasi-Newton solver cannot polish
        if viol > max(SHRINK * viol_prev, 10.0 * tol_feas) and rho < RHO_MAX:
            rho *= RHO_GROWTH
        viol_prev = min(viol, viol_prev)

    return _pack(p, best, "iteration-limit", is_eq, is_in, total_inner)


def _pack(p, state, status, is_eq, is_in, iterations):
    x, f, viol, rk, le, me = state
    duals = np.zeros(p.m)
    ei = ii = 0
    for i, row in enumerate(p.constraints):
        if row.relation == "==":
            duals[i] = -le[ei]
            ei += 1
        elif row.relation == "<=":
            duals[i] = -me[ii]
            ii += 1
        else:
            duals[i] = me[ii]
            ii += 1
    return Solution(status=status, x=x, objective=f, duals=duals,
                    kkt_residual=rk, violation=viol, iterations=iterations)

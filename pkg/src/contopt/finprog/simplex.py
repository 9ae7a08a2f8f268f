"""Dense two-phase simplex for linear programs.

Bounded variables are rewritten into nonnegative standard form (shifts,
mirrors, and free-variable splits), inequality rows get slacks, and
phase one starts from an all-artificial basis. Pricing is Dantzig's rule
with an automatic switch to Bland's rule after a run of degenerate
pivots, which prevents cycling. Dual values are read off the final
basis through the artificial columns.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg.blas import dger

from .program import Solution, effective_bounds, linear_coeffs

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
DEGEN_STREAK = 50


def _extract_arrays(p):
    n = p.n
    c = np.zeros(n)
    c0 = 0.0
    if p.objective is not None:
        coeffs, c0 = linear_coeffs(p.objective)
        for j, v in coeffs.items():
            c[j] = v
    A = np.zeros((p.m, n))
    b = np.zeros(p.m)
    rel = []
    for i, row in enumerate(p.constraints):
        coeffs, const = linear_coeffs(row.expr)
        for j, v in coeffs.items():
            A[i, j] = v
        b[i] = row.rhs - const
        rel.append(row.relation)
    return c, c0, A, b, rel


class _Tableau:
    """Standard-form problem min c.z s.t. A z = b, z >= 0 with b >= 0."""

    def __init__(self, A, b, c):
        self.m, self.n = A.shape
        m, n = self.m, self.n
        self.T = np.zeros((m + 1, n + m + 1))
        self.T[:m, :n] = A
        self.T[:m, n:n + m] = np.eye(m)
        self.T[:m, -1] = b
        self.b0 = np.asarray(b, dtype=float).copy()
        self.basis = list(range(n, n + m))
        self.c = c
        self.iterations = 0

    def _pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        factor = T[:, col].copy()
        factor[row] = 0.0
        # rank-1 elimination in place; dger on the transposed view avoids
        # materializing an outer-product temp the size of the tableau
        dger(-1.0, T[row], factor, a=T.T, overwrite_a=1)
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col

    def _iterate(self, allowed, max_iter, guard_artificials):
        T = self.T
        m, n = self.m, self.n
        degen = 0
        while True:
            if self.iterations >= max_iter:
                return "iteration-limit"
            rc = T[m, :-1]
            cand = np.where(allowed & (rc < -OPT_TOL))[0]
            if cand.size == 0:
                return "optimal"
            if degen > DEGEN_STREAK:
                col = int(cand[0])  # Bland: lowest index, no cycling
            else:
                col = int(cand[np.argmin(rc[cand])])
            if guard_artificials:
                # a zero-valued artificial still in the basis must leave before
                # its row is disturbed, otherwise the equality it stands for
                # could silently relax
                art = np.asarray(self.basis) >= n
                hit = np.where(art & (np.abs(T[:m, col]) > PIVOT_TOL))[0]
                if hit.size:
                    self._pivot(int(hit[0]), col)
                    self.iterations += 1
                    degen += 1
                    continue
            colvals = T[:m, col]
            rows = np.where(colvals > PIVOT_TOL)[0]
            if rows.size == 0:
                return "unbounded"
            ratios = T[rows, -1] / colvals[rows]
            best = np.min(ratios)
            tie = rows[ratios <= best + 1e-12]
            row = int(min(tie, key=lambda i: self.basis[i]))
            if best <= FEAS_TOL:
                degen += 1
            else:
                degen = 0
            self._pivot(row, col)
            self.iterations += 1

    def solve(self, max_iter):
        m, n = self.m, self.n
        T = self.T
        # phase 1: minimize the artificial sum; reduced costs from the
        # all-artificial starting basis are the negated column sums
        T[m, :] = -T[:m, :].sum(axis=0)
        T[m, n:n + m] = 0.0
        allowed = np.zeros(n + m, dtype=bool)
        allowed[:n] = True
        status = self._iterate(allowed, max_iter, guard_artificials=False)
        if status == "iteration-limit":
            return status
        infeas = -T[m, -1]
        if infeas > FEAS_TOL * (1.0 + float(np.abs(self.b0).max(initial=0.0))):
            return "infeasible"
        # drive artificials out of the basis where a structural pivot exists;
        # rows that stay artificial-basic are redundant and sit at zero
        for i in range(m):
            if self.basis[i] >= n:
                cols = np.where(np.abs(T[i, :n]) > PIVOT_TOL)[0]
                if cols.size:
                    self._pivot(i, int(cols[0]))
        # phase 2 cost row from the current basis
        c_ext = np.zeros(n + m)
        c_ext[:n] = self.c
        cb = c_ext[self.basis]
        T[m, :-1] = c_ext - cb @ T[:m, :-1]
        T[m, -1] = -cb @ T[:m, -1]
        T[m, np.asarray(self.basis, dtype=int)] = 0.0
        return self._iterate(allowed, max_iter, guard_artificials=True)

    def primal(self):
        z = np.zeros(self.n)
        for i, j in enumerate(self.basis):
            if j < self.n:
                z[j] = self.T[i, -1]
        return z

    def duals(self):
        # artificial column i entered as e_i, so its reduced cost is -y_i
        return -self.T[self.m, self.n:self.n + self.m].copy()


def solve_lp(p, max_iter=50000):
    """Solve a linear program with the bundled simplex.

    Returns a Solution whose status is "optimal", "infeasible",
    "unbounded", or "iteration-limit". On optimality duals holds one
    multiplier per constraint row as written (nonpositive for <= rows,
    nonnegative for >= rows, free for equalities, minimization sense)
    and dual_objective is the dual bound implied by the final basis.
    """
    n = p.n
    c, c0, A, b, rel = _extract_arrays(p)

    # rewrite each variable into nonnegative standard-form columns
    cols = []      # ("fixed", v) | ("shift", col, lb) | ("mirror", col, ub) | ("pair", cp, cn)
    ub_rows = []   # (std col, range): upper bounds of shifted vars become rows
    ncols = 0
    for spec in p.variables:
        lb, ub = effective_bounds(spec)
        if lb > ub:
            return Solution(status="infeasible")
        if lb == ub:
            cols.append(("fixed", lb))
        elif lb == -math.inf and ub == math.inf:
            cols.append(("pair", ncols, ncols + 1))
            ncols += 2
        elif lb != -math.inf:
            cols.append(("shift", ncols, lb))
            if ub != math.inf:
                ub_rows.append((ncols, ub - lb))
            ncols += 1
        else:
            cols.append(("mirror", ncols, ub))
            ncols += 1

    m_user = len(rel)
    m_std = m_user + len(ub_rows)
    A_std = np.zeros((m_std, ncols))
    b_std = np.zeros(m_std)
    k0 = c0
    c_std = np.zeros(ncols)
    for j, how in enumerate(cols):
        kind = how[0]
        if kind == "fixed":
            k0 += c[j] * how[1]
            b -= A[:, j] * how[1]
        elif kind == "shift":
            _, col, lb = how
            c_std[col] = c[j]
            k0 += c[j] * lb
            A_std[:m_user, col] = A[:, j]
            b -= A[:, j] * lb
        elif kind == "mirror":
            _, col, ub = how
            c_std[col] = -c[j]
            k0 += c[j] * ub
            A_std[:m_user, col] = -A[:, j]
            b -= A[:, j] * ub
        else:
            _, cp, cn = how
            c_std[cp], c_std[cn] = c[j], -c[j]
            A_std[:m_user, cp] = A[:, j]
            A_std[:m_user, cn] = -A[:, j]
    b_std[:m_user] = b
    for k, (col, rng) in enumerate(ub_rows):
        A_std[m_user + k, col] = 1.0
        b_std[m_user + k] = rng

    # slacks for inequalities, then flip rows so every rhs is nonnegative
    rel_std = rel + ["<="] * len(ub_rows)
    slack_cols = [(i, 1.0 if r == "<=" else -1.0)
                  for i, r in enumerate(rel_std) if r != "=="]
    S = np.zeros((m_std, len(slack_cols)))
    for k, (i, sgn) in enumerate(slack_cols):
        S[i, k] = sgn
    A_full = np.hstack([A_std, S]) if slack_cols else A_std
    c_full = np.concatenate([c_std, np.zeros(len(slack_cols))])
    row_sign = np.ones(m_std)
    for i in range(m_std):
        if b_std[i] < 0:
            A_full[i] *= -1.0
            b_std[i] *= -1.0
            row_sign[i] = -1.0

    if A_full.shape[1] == 0:
        # every variable fixed: the rows are pure feasibility checks
        x = np.array([how[1] for how in cols]) if cols else np.zeros(0)
        resid = float(np.abs(b_std).max(initial=0.0))
        if resid > FEAS_TOL:
            return Solution(status="infeasible")
        return Solution(status="optimal", x=x, objective=k0,
                        duals=np.zeros(m_user), dual_objective=k0,
                        iterations=0)

    tab = _Tableau(A_full, b_std, c_full)
    status = tab.solve(max_iter)
    if status != "optimal":
        return Solution(status=status, iterations=tab.iterations)

    z = tab.primal()
    x = np.empty(n)
    for j, how in enumerate(cols):
        kind = how[0]
        if kind == "fixed":
            x[j] = how[1]
        elif kind == "shift":
            x[j] = how[2] + z[how[1]]
        elif kind == "mirror":
            x[j] = how[2] - z[how[1]]
        else:
            x[j] = z[how[1]] - z[how[2]]
    y_norm = tab.duals()
    duals = (y_norm * row_sign)[:m_user].copy()
    obj = float(c @ x + c0)
    dual_obj = float(y_norm @ tab.b0) + k0
    return Solution(status="optimal", x=x, objective=obj, duals=duals,
                    dual_objective=dual_obj, iterations=tab.iterations)

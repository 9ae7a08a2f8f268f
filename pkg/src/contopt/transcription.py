"""Direct transcription of infinite models into finite programs.

Every infinite variable is instanced once per joint support of the
parameters it actually depends on, with the last parameter running
fastest. Measures expand into weighted sums over the integrated
parameter's supports, innermost first. Derivatives add one defining
relation per scheme row and per combination of the remaining
parameters; nothing is emitted at a trajectory's first support, so
boundary conditions stay bindable. Constraints are replicated over
their free parameters, honoring per-parameter range and fix
restrictions. The returned map resolves model references back to
columns of the finite program and reshapes solution vectors onto the
support grids.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .derivatives import fd_relations, ocfe_relations
from .errors import (
    InvalidModel,
    NoSupports,
    OutOfDomain,
    TooLarge,
    UnboundReference,
    UnexpandedMeasure,
    UnsupportedLogic,
)
from .expressions import (
    Binary,
    Const,
    MeasureRef,
    ParamFuncRef,
    ParamRef,
    SumExpr,
    Unary,
    VarRef,
    esum,
    parameter_deps,
)
from .finprog.program import FiniteProgram, Row, VarSpec, eval_expr
from .measures import And, Atom, Or, measure_coefficients

SNAP_TOL = 1e-9
KEY_DECIMALS = 12
DEFAULT_CAP = 2_000_000


def _key(pt):
    return tuple(round(float(x), KEY_DECIMALS) + 0.0 for x in pt)


def _fmt_val(pt):
    if len(pt) == 1:
        return f"{pt[0]:g}"
    return "(" + ",".join(f"{x:g}" for x in pt) + ")"


def _fmt_fix(model, params, fix):
    return ",".join(f"{model.params[p].label}={_fmt_val(fix[p])}" for p in params)


@dataclass
class TranscriptionMap:
    """Column bookkeeping tying a finite program back to its model."""

    model: object
    eff: dict = field(default_factory=dict)          # param handle -> (n, dim) points
    var_cols: dict = field(default_factory=dict)     # (var handle, *keys) -> column
    finite_cols: dict = field(default_factory=dict)  # var handle -> column
    negated: bool = False
    fixed_snap: dict = field(default_factory=dict)   # restricted var -> {param: point}

    # -- resolution --------------------------------------------------------

    def supports(self, param):
        """Support points the program was built on, shape (n, dim)."""
        ph = self.model._h(param)
        if ph not in self.eff:
            raise NoSupports(
                f"parameter '{self.model.params[ph].label}' was not instanced")
        return self.eff[ph].copy()

    def _snap(self, ph, pt):
        pts = self.eff.get(ph)
        if pts is None or pts.shape[0] == 0:
            raise NoSupports(
                f"parameter '{self.model.params[ph].label}' has no supports")
        gaps = np.abs(pts - np.asarray(pt, dtype=float)).max(axis=1)
        i = int(np.argmin(gaps))
        if gaps[i] > SNAP_TOL:
            p = self.model.params[ph]
            raise OutOfDomain(
                f"value {_fmt_val(pt)} of '{p.label}' is not a support "
                f"(nearest is {_fmt_val(tuple(pts[i]))}); add it explicitly")
        return tuple(float(x) for x in pts[i])

    def _free_params(self, v):
        if v.kind == "infinite":
            return list(v.deps)
        parent = self.model.variables[v.parent]
        return [d for d in parent.deps if d not in v.fixed]

    def _col(self, vh, fix):
        v = self.model.variables[vh]
        if v.kind == "finite":
            return self.finite_cols[vh]
        if v.kind == "infinite":
            try:
                key = (vh,) + tuple(_key(fix[d]) for d in v.deps)
            except KeyError as e:
                p = self.model.params[e.args[0]]
                raise UnboundReference(
                    f"variable '{v.label}' appears with parameter '{p.label}' free; "
                    "integrate over it or restrict the variable") from None
            try:
                return self.var_cols[key]
            except KeyError:
                raise OutOfDomain(
                    f"variable '{v.label}' has no instance at "
                    f"{_fmt_fix(self.model, v.deps, fix)}") from None
        merged = dict(self.fixed_snap[vh])
        for d in self._free_params(v):
            if d in fix:
                merged[d] = fix[d]
        return self._col(v.parent, merged)

    def column(self, var, fixings=None):
        """Finite-program column of a variable at given parameter values."""
        vh = self.model._h(var)
        fix = {}
        for p, val in (fixings or {}).items():
            ph = self.model._h(p)
            tup = tuple(float(x) for x in val) \
                if isinstance(val, (tuple, list, np.ndarray)) else (float(val),)
            fix[ph] = self._snap(ph, tup)
        return self._col(vh, fix)

    def instances(self, var):
        """Yield ({param handle: point}, column) over a variable's instances."""
        vh = self.model._h(var)
        v = self.model.variables[vh]
        if v.kind == "finite":
            yield {}, self.finite_cols[vh]
            return
        free = self._free_params(v)
        pools = [[tuple(row) for row in self.eff[d]] for d in free]
        for combo in itertools.product(*pools):
            fix = dict(zip(free, combo))
            yield fix, self._col(vh, fix)

    def values(self, var, x):
        """Solution values of a variable, shaped over its support grids.

        Finite and point variables give a float; an infinite variable
        over k parameters gives a k-dimensional array with axis i
        running over the supports of its i-th parameter.
        """
        x = np.asarray(x, dtype=float)
        vh = self.model._h(var)
        v = self.model.variables[vh]
        free = [] if v.kind == "finite" else self._free_params(v)
        if not free:
            return float(x[self._col(vh, {})])
        shape = [self.eff[d].shape[0] for d in free]
        out = np.empty(int(np.prod(shape)))
        for i, (fix, col) in enumerate(self.instances(vh)):
            out[i] = x[col]
        return out.reshape(shape)

    def objective_value(self, solution):
        """Model-sense objective (undoes the internal flip of max problems)."""
        obj = getattr(solution, "objective", solution)
        if obj is None:
            return None
        return -obj if self.negated else obj

    # -- lowering ----------------------------------------------------------

    def lower(self, expr, fixings=None):
        """Rewrite a model expression over finite-program columns.

        fixings maps parameter handles to point tuples; every parameter
        the expression mentions outside a measure must be fixed.
        """
        model = self.model
        fix = dict(fixings or {})
        memo = {}

        def rec(node):
            got = memo.get(id(node))
            if got is not None:
                return got
            if isinstance(node, Const):
                out = node
            elif isinstance(node, ParamRef):
                val = fix.get(node.param)
                if val is None:
                    p = model.params[node.param]
                    raise UnboundReference(
                        f"parameter '{p.label}' is free here; integrate over it "
                        "or restrict the constraint")
                if node.coord >= len(val):
                    raise OutOfDomain(
                        f"coordinate {node.coord} out of range for a "
                        f"{len(val)}-dimensional parameter")
                out = Const(float(val[node.coord]))
            elif isinstance(node, ParamFuncRef):
                out = Const(model.func_value(node.func, fix))
            elif isinstance(node, VarRef):
                out = VarRef(self._col(node.var, fix))
            elif isinstance(node, MeasureRef):
                out = self._lower_measure(node.measure, fix)
            elif isinstance(node, Unary):
                out = Unary(node.op, rec(node.arg))
            elif isinstance(node, Binary):
                out = Binary(node.op, rec(node.lhs), rec(node.rhs))
            elif isinstance(node, SumExpr):
                out = SumExpr(tuple(rec(t) for t in node.terms))
            else:
                raise UnboundReference(
                    f"cannot lower a {type(node).__name__} node")
            memo[id(node)] = out
            return out

        return rec(expr)

    def _lower_measure(self, mh, fix):
        model = self.model
        m = model.measures[mh]
        if m.kind not in ("integral", "expectation"):
            raise UnexpandedMeasure(
                f"a measure of kind '{m.kind}' has no direct sum form; "
                "reformulate the event before transcription")
        pts = self.eff.get(m.over)
        if pts is None:
            p = model.params[m.over]
            raise NoSupports(f"parameter '{p.label}' has no supports")
        beta = measure_coefficients(model, mh, pts)
        terms = []
        for i in range(pts.shape[0]):
            pt = tuple(float(x) for x in pts[i])
            coeff = float(beta[i])
            if m.weight is not None:
                coeff *= model.func_value(m.weight, {**fix, m.over: pt})
            sub = self.lower(m.body, {**fix, m.over: pt})
            terms.append(Binary("mul", Const(coeff), sub))
        return SumExpr(tuple(terms))


def transcribe(model, cap=DEFAULT_CAP):
    """Instance a validated model into (FiniteProgram, TranscriptionMap).

    Raises InvalidModel when validate() reports errors, NoSupports when
    an instanced parameter has no supports, and TooLarge when the total
    count of variable instances and constraint rows would pass cap.
    """
    errors = [d for d in model.validate() if d.severity == "error"]
    if errors:
        raise InvalidModel(errors)
    model._busy = True
    try:
        return _build(model, cap)
    finally:
        model._busy = False


def _effective_supports(model, tmap, rel_cache):
    """Fill tmap.eff, extending collocation grids with interior nodes."""
    deriv_params = {d.param for d in model.derivatives.values()}
    for ph, p in model.params.items():
        if p.supports is None or len(p.supports) == 0:
            continue
        pts = np.asarray(p.supports.points, dtype=float)
        if ph in deriv_params and p.deriv_scheme[0] == "ocfe":
            vals, rels = ocfe_relations(p.supports.values_1d(), p.deriv_scheme[1])
            rel_cache[ph] = rels
            pts = vals[:, None]
        tmap.eff[ph] = pts


def _require_eff(model, tmap, ph):
    if ph not in tmap.eff:
        p = model.params[ph]
        raise NoSupports(
            f"parameter '{p.label}' has no supports; call generate_supports "
            "or set_supports before transcribing")
    return tmap.eff[ph]


def _relations_for(model, tmap, rel_cache, ph):
    if ph not in rel_cache:
        p = model.params[ph]
        values = _require_eff(model, tmap, ph)[:, 0]
        rel_cache[ph] = fd_relations(values, p.deriv_scheme[1])
    return rel_cache[ph]


def _constraint_pools(model, tmap, c):
    free = sorted(parameter_deps(model, c.expr))
    pools = []
    for ph in free:
        pts = _require_eff(model, tmap, ph)
        r = c.restriction.get(ph)
        if r is None:
            rows = [tuple(float(x) for x in row) for row in pts]
        elif r[0] == "fix":
            rows = [tmap._snap(ph, r[1])]
        else:
            lo, hi = r[1], r[2]
            rows = [tuple(float(x) for x in row) for row in pts
                    if lo - 1e-12 <= row[0] <= hi + 1e-12]
        pools.append(rows)
    return free, pools


def _build(model, cap):
    tmap = TranscriptionMap(model=model)
    rel_cache = {}
    _effective_supports(model, tmap, rel_cache)

    # count before materializing anything
    total = 0
    for v in model.variables.values():
        if v.kind == "finite":
            total += 1
        elif v.kind == "infinite":
            count = 1
            for d in v.deps:
                count *= _require_eff(model, tmap, d).shape[0]
            total += count
    for c in model.constraints.values():
        _, pools = _constraint_pools(model, tmap, c)
        count = 1
        for rows in pools:
            count *= len(rows)
        total += count
    for d in model.derivatives.values():
        y = model.variables[d.var]
        rels = _relations_for(model, tmap, rel_cache, d.param)
        count = len(rels)
        for dd in y.deps:
            if dd != d.param:
                count *= tmap.eff[dd].shape[0]
        total += count
    if total > cap:
        raise TooLarge(
            f"transcription would create {total} variable instances and "
            f"constraint rows, above the cap of {cap}; coarsen the supports "
            "or raise cap deliberately")

    # columns: declaration order, joint supports with the last parameter fastest
    specs = []
    for vh, v in model.variables.items():
        if v.kind == "finite":
            tmap.finite_cols[vh] = len(specs)
            specs.append(VarSpec(lb=v.lb, ub=v.ub, integrality=v.integrality,
                                 start=v.start, label=v.label))
        elif v.kind == "infinite":
            pools = [[tuple(float(x) for x in row)
                      for row in _require_eff(model, tmap, d)] for d in v.deps]
            profiled = isinstance(v.start, ParamFuncRef)
            for combo in itertools.product(*pools):
                fix = dict(zip(v.deps, combo))
                key = (vh,) + tuple(_key(pt) for pt in combo)
                tmap.var_cols[key] = len(specs)
                suffix = f"[{_fmt_fix(model, v.deps, fix)}]" if v.deps else ""
                start = model.func_value(v.start, fix) if profiled else v.start
                specs.append(VarSpec(lb=v.lb, ub=v.ub, integrality=v.integrality,
                                     start=start, label=v.label + suffix))

    # snap stored fixings of restricted variables onto the support grids
    for vh, v in model.variables.items():
        if v.kind in ("point", "semi_infinite"):
            tmap.fixed_snap[vh] = {ph: tmap._snap(ph, val)
                                   for ph, val in v.fixed.items()}

    rows = []
    for c in model.constraints.values():
        free, pools = _constraint_pools(model, tmap, c)
        for combo in itertools.product(*pools):
            fix = dict(zip(free, combo))
            label = c.label + (f"[{_fmt_fix(model, free, fix)}]" if free else "")
            rows.append(Row(expr=tmap.lower(c.expr, fix), relation=c.relation,
                            rhs=c.rhs, label=label))

    for d in model.derivatives.values():
        y = model.variables[d.var]
        p = model.params[d.param]
        rels = _relations_for(model, tmap, rel_cache, d.param)
        tvals = [tuple(float(x) for x in row) for row in tmap.eff[d.param]]
        others = [dd for dd in y.deps if dd != d.param]
        pools = [[tuple(float(x) for x in row) for row in tmap.eff[dd]]
                 for dd in others]
        for combo in itertools.product(*pools):
            base = dict(zip(others, combo))
            ctx = f",{_fmt_fix(model, others, base)}" if others else ""
            for rel in rels:
                terms = []
                for idx, cf in rel.y_terms:
                    fix = {**base, d.param: tvals[idx]}
                    terms.append(Binary("mul", Const(float(cf)),
                                        VarRef(tmap._col(d.var, fix))))
                for idx, cf in rel.dy_terms:
                    fix = {**base, d.param: tvals[idx]}
                    terms.append(Binary("mul", Const(float(cf)),
                                        VarRef(tmap._col(d.lifted, fix))))
                anchor = tvals[rel.dy_terms[0][0]][0]
                rows.append(Row(expr=esum(terms), relation="==", rhs=0.0,
                                label=f"{model.variables[d.lifted].label}"
                                      f"[{p.label}={anchor:g}{ctx}]"))

    objective = None
    if model.objective is not None:
        objective = tmap.lower(model.objective, {})
        if model.objective_sense == "max":
            objective = Unary("neg", objective)
            tmap.negated = True

    program = FiniteProgram(variables=specs, objective=objective, constraints=rows)
    return program, tmap


def solution_values(tmap, var, solution):
    """Values of one variable out of a Solution or raw point."""
    x = getattr(solution, "x", solution)
    return tmap.values(var, x)


def _tree_holds(tmap, x, node, fix, tol):
    if isinstance(node, Atom):
        val = eval_expr(tmap.lower(node.expr, fix), x)
        if node.relation == "<=":
            return val <= node.rhs + tol
        return val > node.rhs - tol
    if isinstance(node, And):
        return all(_tree_holds(tmap, x, c, fix, tol) for c in node.children)
    if isinstance(node, Or):
        return any(_tree_holds(tmap, x, c, fix, tol) for c in node.children)
    raise UnsupportedLogic(f"event tree nodes must be Atom/And/Or, got {type(node).__name__}")


def event_fraction(tmap, solution, tree, param, tol=1e-8):
    """Realized fraction of a parameter's supports where an event holds.

    Counts supports with equal weight, matching how event probability
    measures are discretized.
    """
    x = getattr(solution, "x", solution)
    ph = tmap.model._h(param)
    pts = tmap.eff.get(ph)
    if pts is None or pts.shape[0] == 0:
        raise NoSupports(
            f"parameter '{tmap.model.params[ph].label}' has no supports")
    hits = 0
    for row in pts:
        if _tree_holds(tmap, x, tree, {ph: tuple(float(v) for v in row)}, tol):
            hits += 1
    return hits / pts.shape[0]

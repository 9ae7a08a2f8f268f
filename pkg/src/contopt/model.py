"""Model container: parameters, variables, constraints, measures, objective.

Handles are integers unique across every registry of one model. The
builder methods return lightweight expression nodes (ParamRef, VarRef)
so models read like plain arithmetic. Building is single-writer; while a
transcription is reading the model, mutation raises ModelBusy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import domains as dom
from .errors import (
    BadBounds,
    DuplicateLabel,
    IrrelevantRestriction,
    ModelBusy,
    NotInfinite,
    OutOfDomain,
    UnboundReference,
    UnknownParameter,
)
from .expressions import (
    Const,
    Expr,
    MeasureRef,
    ParamFuncRef,
    ParamRef,
    VarRef,
    as_expr,
    children,
    parameter_deps,
)

RELATIONS = ("<=", ">=", "==")
INTEGRALITIES = ("continuous", "binary", "integer")


@dataclass
class Variable:
    handle: int
    label: str
    kind: str  # "infinite" | "semi_infinite" | "point" | "finite"
    deps: tuple = ()
    lb: float = -math.inf
    ub: float = math.inf
    integrality: str = "continuous"
    start: float | None = None
    parent: int | None = None
    fixed: dict = field(default_factory=dict)  # param handle -> value tuple


@dataclass
class ParameterFunction:
    handle: int
    label: str
    params: tuple
    fn: object
    bound: dict = field(default_factory=dict)


@dataclass
class Measure:
    handle: int
    kind: str  # "integral" | "expectation" | "event_prob"
    body: Expr
    over: int
    weight: int | None = None
    threshold: float | None = None


@dataclass
class Derivative:
    handle: int
    var: int
    param: int
    lifted: int


@dataclass
class Constraint:
    handle: int
    label: str
    expr: Expr
    relation: str
    rhs: float
    restriction: dict = field(default_factory=dict)
    # restriction[param] = ("fix", value_tuple) or ("range", lo, hi)


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str

    def __str__(self):
        return f"{self.severity}: {self.message}"


def _round_val(v):
    return tuple(round(float(x), dom.DEDUP_DECIMALS) for x in v)


class Model:
    """Container for one optimization model over continuous domains."""

    def __init__(self, name="model"):
        self.name = name
        self._next = 0
        self.params = {}
        self.variables = {}
        self.functions = {}
        self.measures = {}
        self.derivatives = {}
        self.constraints = {}
        self.objective_sense = None
        self.objective = None
        self._labels = set()
        self._restrict_cache = {}
        self._deriv_cache = {}
        self._busy = False

    # -- bookkeeping ------------------------------------------------------

    def _handle(self):
        h = self._next
        self._next += 1
        return h

    def _guard(self):
        if self._busy:
            raise ModelBusy("model is being transcribed; build a new model instead of mutating")

    def _claim_label(self, label):
        if label in self._labels:
            raise DuplicateLabel(f"label '{label}' already used in this model")
        self._labels.add(label)

    def _auto_label(self, base):
        if base not in self._labels:
            return base
        k = 2
        while f"{base}~{k}" in self._labels:
            k += 1
        return f"{base}~{k}"

    @staticmethod
    def _h(x):
        return getattr(x, "handle", x)

    def param_record(self, h) -> dom.Parameter:
        h = self._h(h)
        try:
            return self.params[h]
        except KeyError:
            raise UnknownParameter(f"parameter handle {h} does not resolve") from None

    def has_param(self, h):
        return self._h(h) in self.params

    def var_record(self, h) -> Variable:
        h = self._h(h)
        try:
            return self.variables[h]
        except KeyError:
            raise UnboundReference(f"variable handle {h} does not resolve") from None

    def func_record(self, h) -> ParameterFunction:
        h = self._h(h)
        try:
            return self.functions[h]
        except KeyError:
            raise UnboundReference(f"function handle {h} does not resolve") from None

    def measure_record(self, h) -> Measure:
        h = self._h(h)
        try:
            return self.measures[h]
        except KeyError:
            raise UnboundReference(f"measure handle {h} does not resolve") from None

    def var_free_params(self, h):
        v = self.var_record(h)
        if v.kind == "infinite":
            return frozenset(v.deps)
        if v.kind == "semi_infinite":
            parent = self.var_record(v.parent)
            return frozenset(d for d in parent.deps if d not in v.fixed)
        return frozenset()

    # -- parameters -------------------------------------------------------

    def add_parameter(self, label, domain) -> ParamRef:
        self._guard()
        self._claim_label(label)
        h = self._handle()
        self.params[h] = dom.Parameter(handle=h, label=label, domain=domain)
        return ParamRef(h)

    def interval_parameter(self, label, lo, hi) -> ParamRef:
        return self.add_parameter(label, dom.make_interval(lo, hi))

    def random_parameter(self, label, distribution) -> ParamRef:
        return self.add_parameter(label, distribution)

    def generate_supports(self, param, scheme, n, seed=None):
        self._guard()
        p = self.param_record(param)
        p.supports = dom.generate_supports(p.domain, scheme, n, seed=seed, label=p.label)
        return p.supports

    def set_supports(self, param, values):
        self._guard()
        p = self.param_record(param)
        p.supports = dom.supports_from_values(p.domain, values)
        return p.supports

    def add_supports(self, param, values):
        self._guard()
        p = self.param_record(param)
        p.supports = dom.add_supports(p.supports, p.domain, values)
        return p.supports

    def set_deriv_scheme(self, param, scheme):
        """Scheme for derivatives lifted over this parameter.

        scheme: "backward", "forward", "central", or ("ocfe", n_nodes).
        """
        from .derivatives import normalize_scheme

        self._guard()
        p = self.param_record(param)
        p.deriv_scheme = normalize_scheme(scheme)

    # -- variables --------------------------------------------------------

    def add_variable(self, label, deps=(), lb=-math.inf, ub=math.inf,
                     integrality="continuous", start=None) -> VarRef:
        self._guard()
        if integrality not in INTEGRALITIES:
            raise BadBounds(f"unknown integrality '{integrality}'")
        dep_handles = tuple(self._h(d) for d in deps)
        for d in dep_handles:
            self.param_record(d)
        if len(set(dep_handles)) != len(dep_handles):
            raise IrrelevantRestriction(f"variable '{label}' lists a parameter twice")
        if integrality == "binary":
            if lb == -math.inf:
                lb = 0.0
            if ub == math.inf:
                ub = 1.0
            if lb < 0.0 or ub > 1.0:
                raise BadBounds(f"binary variable '{label}' needs bounds within [0, 1]")
        lb, ub = float(lb), float(ub)
        if math.isnan(lb) or math.isnan(ub) or lb > ub:
            raise BadBounds(f"variable '{label}' has lb {lb} > ub {ub}")
        if isinstance(start, ParamFuncRef):
            # start profile: evaluated per instance during transcription
            f = self.func_record(start)
            missing = [p for p in f.params if p not in dep_handles and p not in f.bound]
            if missing:
                raise IrrelevantRestriction(
                    f"start profile '{f.label}' needs parameters the variable "
                    f"'{label}' does not depend on")
        elif start is not None:
            start = float(start)
        self._claim_label(label)
        h = self._handle()
        kind = "infinite" if dep_handles else "finite"
        self.variables[h] = Variable(handle=h, label=label, kind=kind, deps=dep_handles,
                                     lb=lb, ub=ub, integrality=integrality,
                                     start=start)
        return VarRef(h)

    def restrict_variable(self, var, fixings) -> int:
        """Fix some of an infinite variable's parameters at given values.

        Returns the handle of the semi-infinite (partial fixing) or point
        (full fixing) variable. Idempotent: the same fixings return the
        same handle. Bounds, integrality, and the start value are copied
        from the parent at creation time.
        """
        self._guard()
        vh = self._h(var)
        v = self.var_record(vh)
        if v.kind != "infinite":
            raise NotInfinite(
                f"variable '{v.label}' is {v.kind}; only infinite variables can be restricted "
                "(restrict the parent with all fixings at once)")
        if not fixings:
            raise IrrelevantRestriction("empty fixing set")
        norm = {}
        for p, val in fixings.items():
            ph = self._h(p)
            prec = self.param_record(ph)
            if ph not in v.deps:
                raise IrrelevantRestriction(
                    f"variable '{v.label}' does not depend on parameter '{prec.label}'")
            if not isinstance(val, (tuple, list)):
                val = (val,)
            val = tuple(float(x) for x in val)
            if len(val) != prec.dim:
                raise OutOfDomain(f"parameter '{prec.label}' expects {prec.dim} coordinates")
            if not prec.domain.contains(val):
                raise OutOfDomain(f"value {val} outside the domain of '{prec.label}'")
            norm[ph] = val
        key = (vh, tuple(sorted((p, _round_val(val)) for p, val in norm.items())))
        if key in self._restrict_cache:
            return self._restrict_cache[key]
        h = self._handle()
        full = len(norm) == len(v.deps)
        parts = ",".join(f"{self.params[p].label}={'/'.join('%.10g' % x for x in norm[p])}"
                         for p in v.deps if p in norm)
        label = self._auto_label(f"{v.label}({parts})")
        self._labels.add(label)
        self.variables[h] = Variable(handle=h, label=label,
                                     kind="point" if full else "semi_infinite",
                                     deps=(), lb=v.lb, ub=v.ub, integrality=v.integrality,
                                     start=v.start, parent=vh, fixed=norm)
        self._restrict_cache[key] = h
        return h

    def restrict(self, var, fixings) -> VarRef:
        return VarRef(self.restrict_variable(var, fixings))

    def deriv(self, var, param) -> VarRef:
        """Lifted derivative of an infinite variable with respect to one parameter."""
        from .derivatives import lift

        return lift(self, var, param)

    # -- parameter functions ----------------------------------------------

    def add_function(self, label, params, fn) -> ParamFuncRef:
        self._guard()
        self._claim_label(label)
        param_handles = tuple(self._h(p) for p in params)
        for p in param_handles:
            self.param_record(p)
        h = self._handle()
        self.functions[h] = ParameterFunction(handle=h, label=label, params=param_handles, fn=fn)
        return ParamFuncRef(h)

    def bind_function(self, func, fixings):
        """Partially bind a parameter function; fully bound collapses to Const."""
        f = self.func_record(func)
        bound = dict(f.bound)
        for p, val in fixings.items():
            ph = self._h(p)
            if ph not in f.params:
                raise IrrelevantRestriction(f"function '{f.label}' has no parameter {ph}")
            bound[ph] = val if isinstance(val, tuple) else (float(val),)
        if all(p in bound for p in f.params):
            args = [bound[p] if self.params[p].dim > 1 else bound[p][0] for p in f.params]
            return Const(float(f.fn(*args)))
        h = self._handle()
        label = self._auto_label(f.label + "~bound")
        self._labels.add(label)
        self.functions[h] = ParameterFunction(handle=h, label=label, params=f.params,
                                              fn=f.fn, bound=bound)
        return ParamFuncRef(h)

    def func_value(self, func, fix):
        """Evaluate a parameter function given a fixing map param -> value tuple."""
        f = self.func_record(func)
        args = []
        for p in f.params:
            val = f.bound.get(p, fix.get(p))
            if val is None:
                raise UnknownParameter(f"function '{f.label}' missing value for parameter {p}")
            args.append(val if self.params[p].dim > 1 else val[0])
        return float(f.fn(*args))

    # -- measures ----------------------------------------------------------

    def _add_measure(self, kind, body, over, weight=None, threshold=None) -> MeasureRef:
        self._guard()
        h = self._handle()
        self.measures[h] = Measure(handle=h, kind=kind, body=as_expr(body),
                                   over=self._h(over),
                                   weight=None if weight is None else self._h(weight),
                                   threshold=threshold)
        return MeasureRef(h)

    def clone_measure(self, measure, new_body) -> int:
        m = self.measure_record(measure)
        h = self._handle()
        self.measures[h] = Measure(handle=h, kind=m.kind, body=new_body, over=m.over,
                                   weight=m.weight, threshold=m.threshold)
        return h

    def integral(self, body, param, weight=None) -> MeasureRef:
        from .measures import integral

        return integral(self, body, param, weight)

    def expectation(self, body, param) -> MeasureRef:
        from .measures import expectation

        return expectation(self, body, param)

    def cvar(self, body, param, alpha, label=None):
        from .measures import cvar

        return cvar(self, body, param, alpha, label=label)

    # -- constraints and objective ----------------------------------------

    def add_constraint(self, expr, relation, rhs=0.0, label=None, restriction=None) -> int:
        self._guard()
        if relation not in RELATIONS:
            raise UnboundReference(f"unknown relation '{relation}'")
        expr = as_expr(expr)
        rhs = float(rhs)
        if math.isnan(rhs):
            raise BadBounds("constraint rhs is nan")
        deps = parameter_deps(self, expr)
        norm_restriction = {}
        if restriction:
            for p, spec in restriction.items():
                ph = self._h(p)
                prec = self.param_record(ph)
                if ph not in deps:
                    raise IrrelevantRestriction(
                        f"constraint does not depend on parameter '{prec.label}'")
                # a 2-tuple is a range only for scalar parameters; for a
                # 2-dimensional parameter it is a point fixing
                if isinstance(spec, (tuple, list)) and len(spec) == 2 and prec.dim == 1:
                    norm_restriction[ph] = ("range", float(spec[0]), float(spec[1]))
                else:
                    v = spec if isinstance(spec, (tuple, list)) else (spec,)
                    if len(v) != prec.dim:
                        raise OutOfDomain(
                            f"restriction value for '{prec.label}' has {len(v)} "
                            f"coordinates, expected {prec.dim}")
                    norm_restriction[ph] = ("fix", tuple(float(x) for x in v))
        h = self._handle()
        if label is None:
            label = self._auto_label(f"c{h}")
            self._labels.add(label)
        else:
            self._claim_label(label)
        self.constraints[h] = Constraint(handle=h, label=label, expr=expr, relation=relation,
                                         rhs=rhs, restriction=norm_restriction)
        return h

    def set_objective(self, sense, expr):
        self._guard()
        if sense not in ("min", "max"):
            raise UnboundReference(f"objective sense must be min or max, got '{sense}'")
        self.objective_sense = sense
        self.objective = as_expr(expr)

    # -- validation --------------------------------------------------------

    def validate(self):
        """Check global consistency; returns a list of Diagnostics.

        The model is usable for transcription when no diagnostic has
        severity "error".
        """
        diags = []
        if self.objective is not None:
            try:
                free = parameter_deps(self, self.objective)
            except (UnboundReference, UnknownParameter) as e:
                diags.append(Diagnostic("error", f"objective: {e}"))
                free = frozenset()
            if free:
                labels = ", ".join(sorted(self.params[p].label for p in free))
                diags.append(Diagnostic(
                    "error",
                    f"objective still depends on parameter(s) {labels}; "
                    "apply a measure or restrict the variables"))
        referenced = set()

        def walk(expr):
            stack = [expr]
            while stack:
                node = stack.pop()
                if isinstance(node, VarRef):
                    referenced.add(node.var)
                    v = self.variables.get(node.var)
                    if v is not None and v.parent is not None:
                        referenced.add(v.parent)
                elif isinstance(node, MeasureRef):
                    m = self.measures.get(node.measure)
                    if m is not None:
                        stack.append(m.body)
                stack.extend(children(node))

        if self.objective is not None:
            walk(self.objective)
        for c in self.constraints.values():
            walk(c.expr)
            try:
                parameter_deps(self, c.expr)
            except (UnboundReference, UnknownParameter) as e:
                diags.append(Diagnostic("error", f"constraint '{c.label}': {e}"))
        for d in self.derivatives.values():
            referenced.add(d.var)
        for h, v in self.variables.items():
            if v.kind in ("infinite", "finite") and h not in referenced:
                diags.append(Diagnostic("warning", f"variable '{v.label}' is never referenced"))
        return diags

    def validate_ok(self):
        return [d for d in self.validate() if d.severity == "error"] == []

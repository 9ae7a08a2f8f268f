"""Expression graphs over model handles.

Nodes reference variables, parameters, parameter functions, and measures
by integer handle; the owning model resolves them. Graphs are immutable;
operators on Expr build new nodes. Adjacent sums are flattened into one
n-ary node so accumulation loops stay shallow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    DomainError,
    NonDifferentiable,
    NotInfinite,
    UnboundReference,
    UnknownParameter,
)

UNARY_OPS = ("neg", "exp", "log", "sqrt", "abs")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return _sum2(self, as_expr(other))

    def __radd__(self, other):
        return _sum2(as_expr(other), self)

    def __sub__(self, other):
        return Binary("sub", self, as_expr(other))

    def __rsub__(self, other):
        return Binary("sub", as_expr(other), self)

    def __mul__(self, other):
        return Binary("mul", self, as_expr(other))

    def __rmul__(self, other):
        return Binary("mul", as_expr(other), self)

    def __truediv__(self, other):
        return Binary("div", self, as_expr(other))

    def __rtruediv__(self, other):
        return Binary("div", as_expr(other), self)

    def __pow__(self, other):
        e = as_expr(other)
        if not isinstance(e, Const):
            raise TypeError("pow exponent must be a constant")
        return Binary("pow", self, e)

    def __neg__(self):
        return Unary("neg", self)

    def __pos__(self):
        return self


@dataclass(frozen=True, eq=False, repr=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, eq=False, repr=False)
class VarRef(Expr):
    var: int

    @property
    def handle(self):
        return self.var

    def __repr__(self):
        return f"VarRef({self.var})"


@dataclass(frozen=True, eq=False, repr=False)
class ParamRef(Expr):
    param: int
    coord: int = 0

    @property
    def handle(self):
        return self.param

    def __getitem__(self, k):
        return ParamRef(self.param, int(k))

    def __repr__(self):
        return f"ParamRef({self.param}, {self.coord})"


@dataclass(frozen=True, eq=False, repr=False)
class ParamFuncRef(Expr):
    func: int

    @property
    def handle(self):
        return self.func

    def __repr__(self):
        return f"ParamFuncRef({self.func})"


@dataclass(frozen=True, eq=False, repr=False)
class MeasureRef(Expr):
    measure: int

    @property
    def handle(self):
        return self.measure

    def __repr__(self):
        return f"MeasureRef({self.measure})"


@dataclass(frozen=True, eq=False, repr=False)
class Unary(Expr):
    op: str
    arg: Expr

    def __repr__(self):
        return f"Unary({self.op}, {self.arg!r})"


@dataclass(frozen=True, eq=False, repr=False)
class Binary(Expr):
    op: str
    lhs: Expr
    rhs: Expr

    def __repr__(self):
        return f"Binary({self.op}, {self.lhs!r}, {self.rhs!r})"


@dataclass(frozen=True, eq=False, repr=False)
class SumExpr(Expr):
    terms: tuple

    def __repr__(self):
        return f"SumExpr(<{len(self.terms)} terms>)"


def as_expr(x):
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return Const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


def _sum2(a, b):
    at = a.terms if isinstance(a, SumExpr) else (a,)
    bt = b.terms if isinstance(b, SumExpr) else (b,)
    return SumExpr(at + bt)


def esum(terms):
    """n-ary sum without building a chain of binary adds."""
    flat = []
    for t in terms:
        t = as_expr(t)
        if isinstance(t, SumExpr):
            flat.extend(t.terms)
        else:
            flat.append(t)
    if not flat:
        return Const(0.0)
    if len(flat) == 1:
        return flat[0]
    return SumExpr(tuple(flat))


def exp(x):
    return Unary("exp", as_expr(x))


def log(x):
    return Unary("log", as_expr(x))


def sqrt(x):
    return Unary("sqrt", as_expr(x))


def abs_(x):
    return Unary("abs", as_expr(x))


def children(node, into_measures=False):
    if isinstance(node, Unary):
        return (node.arg,)
    if isinstance(node, Binary):
        return (node.lhs, node.rhs)
    if isinstance(node, SumExpr):
        return node.terms
    return ()


def topo_order(expr, child_fn=None):
    """Post-order node list (children before parents), each node once."""
    child_fn = child_fn or children
    seen = set()
    order = []
    stack = [(expr, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for ch in child_fn(node):
            if id(ch) not in seen:
                stack.append((ch, False))
    return order


def _apply_unary(op, x):
    if op == "neg":
        return -x
    if op == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            return math.inf
    if op == "log":
        if x <= 0.0:
            raise DomainError(f"log of non-positive value {x}")
        return math.log(x)
    if op == "sqrt":
        if x < 0.0:
            raise DomainError(f"sqrt of negative value {x}")
        return math.sqrt(x)
    if op == "abs":
        return abs(x)
    raise UnboundReference(f"unknown unary op '{op}'")


def _apply_pow(base, expo):
    try:
        return math.pow(base, expo)
    except ValueError:
        raise DomainError(f"pow undefined for base {base}, exponent {expo}") from None
    except OverflowError:
        return math.inf


def _apply_binary(op, a, b):
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b
    if op == "pow":
        return _apply_pow(a, b)
    raise UnboundReference(f"unknown binary op '{op}'")


def _param_value(assign, handle, coord):
    try:
        v = assign[handle]
    except KeyError:
        raise UnknownParameter(f"no value assigned for parameter handle {handle}") from None
    if isinstance(v, (tuple, list)):
        return float(v[coord])
    if coord != 0:
        raise DomainError(f"scalar parameter {handle} indexed at coordinate {coord}")
    return float(v)


def evaluate(model, expr, assign):
    """Evaluate an expression under handle -> value assignments.

    assign maps variable handles to reals and parameter handles to reals
    (or tuples for multi-dimensional parameters). Domain violations raise
    DomainError rather than propagating NaN. Measures have no pointwise
    value; transcribe first.
    """
    assign = {getattr(k, "handle", k): v for k, v in assign.items()}
    vals = {}
    for node in topo_order(expr):
        if isinstance(node, Const):
            v = node.value
        elif isinstance(node, VarRef):
            if node.var not in assign:
                raise UnboundReference(f"no value assigned for variable handle {node.var}")
            v = float(assign[node.var])
        elif isinstance(node, ParamRef):
            v = _param_value(assign, node.param, node.coord)
        elif isinstance(node, ParamFuncRef):
            f = model.func_record(node.func)
            args = []
            for p in f.params:
                if p in f.bound:
                    args.append(f.bound[p])
                else:
                    d = model.param_record(p).dim
                    args.append(_param_value(assign, p, 0) if d == 1
                                else tuple(_param_value(assign, p, k) for k in range(d)))
            v = float(f.fn(*args))
        elif isinstance(node, MeasureRef):
            raise UnboundReference("a measure has no pointwise value; transcribe the model instead")
        elif isinstance(node, Unary):
            v = _apply_unary(node.op, vals[id(node.arg)])
        elif isinstance(node, Binary):
            v = _apply_binary(node.op, vals[id(node.lhs)], vals[id(node.rhs)])
        elif isinstance(node, SumExpr):
            v = math.fsum(vals[id(t)] for t in node.terms)
        else:
            raise UnboundReference(f"unknown node {type(node).__name__}")
        vals[id(node)] = v
    return vals[id(expr)]


def grad(model, expr, wrt, assign):
    """Reverse-mode gradient of expr with respect to the variable handles in wrt.

    Returns a list of partials aligned with wrt. Raises NonDifferentiable
    at an abs kink and DomainError where a derivative is undefined.
    """
    wrt = [getattr(v, "handle", v) for v in wrt]
    assign = {getattr(k, "handle", k): v for k, v in assign.items()}
    order = topo_order(expr)
    vals = {}
    for node in order:
        if isinstance(node, Unary):
            vals[id(node)] = _apply_unary(node.op, vals[id(node.arg)])
        elif isinstance(node, Binary):
            vals[id(node)] = _apply_binary(node.op, vals[id(node.lhs)], vals[id(node.rhs)])
        elif isinstance(node, SumExpr):
            vals[id(node)] = math.fsum(vals[id(t)] for t in node.terms)
        elif isinstance(node, Const):
            vals[id(node)] = node.value
        elif isinstance(node, VarRef):
            if node.var not in assign:
                raise UnboundReference(f"no value assigned for variable handle {node.var}")
            vals[id(node)] = float(assign[node.var])
        elif isinstance(node, ParamRef):
            vals[id(node)] = _param_value(assign, node.param, node.coord)
        elif isinstance(node, ParamFuncRef):
            vals[id(node)] = evaluate(model, node, assign)
        elif isinstance(node, MeasureRef):
            raise UnboundReference("a measure has no pointwise value; transcribe the model instead")

    adj = {id(expr): 1.0}
    partial = {h: 0.0 for h in wrt}
    for node in reversed(order):
        a = adj.get(id(node), 0.0)
        if a == 0.0:
            continue
        if isinstance(node, VarRef):
            if node.var in partial:
                partial[node.var] += a
        elif isinstance(node, Unary):
            x = vals[id(node.arg)]
            if node.op == "neg":
                d = -1.0
            elif node.op == "exp":
                d = vals[id(node)]
            elif node.op == "log":
                d = 1.0 / x
            elif node.op == "sqrt":
                if x == 0.0:
                    raise DomainError("derivative of sqrt undefined at 0")
                d = 0.5 / vals[id(node)]
            elif node.op == "abs":
                if x == 0.0:
                    raise NonDifferentiable("abs is not differentiable at 0")
                d = 1.0 if x > 0 else -1.0
            adj[id(node.arg)] = adj.get(id(node.arg), 0.0) + a * d
        elif isinstance(node, Binary):
            lv, rv = vals[id(node.lhs)], vals[id(node.rhs)]
            if node.op == "add":
                dl, dr = 1.0, 1.0
            elif node.op == "sub":
                dl, dr = 1.0, -1.0
            elif node.op == "mul":
                dl, dr = rv, lv
            elif node.op == "div":
                dl, dr = 1.0 / rv, -lv / (rv * rv)
            elif node.op == "pow":
                c = rv
                if c == 0.0:
                    dl = 0.0
                elif lv == 0.0 and c < 1.0:
                    raise DomainError(f"derivative of pow undefined at base 0 with exponent {c}")
                else:
                    dl = c * _apply_pow(lv, c - 1.0)
                dr = 0.0  # exponent is a Const node
            adj[id(node.lhs)] = adj.get(id(node.lhs), 0.0) + a * dl
            adj[id(node.rhs)] = adj.get(id(node.rhs), 0.0) + a * dr
        elif isinstance(node, SumExpr):
            for t in node.terms:
                adj[id(t)] = adj.get(id(t), 0.0) + a
    return [partial[h] for h in wrt]


def parameter_deps(model, expr):
    """Free parameter handles of an expression.

    A measure consumes the parameter it integrates over; restricted
    variables contribute only their remaining free parameters.
    """

    def child_fn(node):
        if isinstance(node, MeasureRef):
            m = model.measure_record(node.measure)
            return (m.body,)
        return children(node)

    deps = {}
    for node in topo_order(expr, child_fn):
        s = frozenset()
        if isinstance(node, ParamRef):
            if not model.has_param(node.param):
                raise UnknownParameter(f"parameter handle {node.param} does not resolve")
            s = frozenset((node.param,))
        elif isinstance(node, ParamFuncRef):
            f = model.func_record(node.func)
            s = frozenset(p for p in f.params if p not in f.bound)
        elif isinstance(node, VarRef):
            s = model.var_free_params(node.var)
        elif isinstance(node, MeasureRef):
            m = model.measure_record(node.measure)
            s = deps[id(m.body)] - {m.over}
            if m.weight is not None:
                wf = model.func_record(m.weight)
                s |= frozenset(p for p in wf.params if p not in wf.bound) - {m.over}
        else:
            for ch in child_fn(node):
                s |= deps[id(ch)]
        deps[id(node)] = s
    return deps[id(expr)]


def restrict(model, expr, param, value):
    """Rewrite expr with one parameter fixed at a value.

    ParamRefs become constants, infinite variables become restricted
    variables created on demand, and parameter functions are partially
    bound (fully bound ones collapse to constants). Subtrees that do not
    mention the parameter are shared unchanged, so evaluating the result
    performs the same floating-point operations as evaluating the
    original with the parameter assigned.
    """
    param = getattr(param, "handle", param)
    if not model.has_param(param):
        raise UnknownParameter(f"parameter handle {param} does not resolve")
    dim = model.param_record(param).dim
    if isinstance(value, (tuple, list)):
        val = tuple(float(v) for v in value)
    else:
        val = (float(value),)
    if len(val) != dim:
        raise DomainError(f"parameter expects {dim} coordinates, got {len(val)}")

    def child_fn(node):
        if isinstance(node, MeasureRef):
            m = model.measure_record(node.measure)
            return (m.body,)
        return children(node)

    deps = {}
    rebuilt = {}
    for node in topo_order(expr, child_fn):
        if isinstance(node, ParamRef):
            deps[id(node)] = frozenset((node.param,))
        elif isinstance(node, ParamFuncRef):
            f = model.func_record(node.func)
            deps[id(node)] = frozenset(p for p in f.params if p not in f.bound)
        elif isinstance(node, VarRef):
            deps[id(node)] = model.var_free_params(node.var)
        elif isinstance(node, MeasureRef):
            m = model.measure_record(node.measure)
            deps[id(node)] = deps[id(m.body)] - {m.over}
        else:
            s = frozenset()
            for ch in child_fn(node):
                s |= deps[id(ch)]
            deps[id(node)] = s

        if param not in deps[id(node)]:
            rebuilt[id(node)] = node
            continue
        if isinstance(node, ParamRef):
            rebuilt[id(node)] = Const(val[node.coord])
        elif isinstance(node, VarRef):
            kind = model.var_record(node.var).kind
            if kind != "infinite":
                raise NotInfinite(
                    "cannot restrict an already-restricted variable; restrict the parent "
                    "with all fixings at once")
            rebuilt[id(node)] = VarRef(model.restrict_variable(node.var, {param: val}))
        elif isinstance(node, ParamFuncRef):
            rebuilt[id(node)] = model.bind_function(node.func, {param: val})
        elif isinstance(node, MeasureRef):
            m = model.measure_record(node.measure)
            new_body = rebuilt[id(m.body)]
            rebuilt[id(node)] = MeasureRef(model.clone_measure(node.measure, new_body))
        elif isinstance(node, Unary):
            rebuilt[id(node)] = Unary(node.op, rebuilt[id(node.arg)])
        elif isinstance(node, Binary):
            rebuilt[id(node)] = Binary(node.op, rebuilt[id(node.lhs)], rebuilt[id(node.rhs)])
        elif isinstance(node, SumExpr):
            rebuilt[id(node)] = SumExpr(tuple(rebuilt[id(t)] for t in node.terms))
        else:
            rebuilt[id(node)] = node
    return rebuilt[id(expr)]

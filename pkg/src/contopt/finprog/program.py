"""Finite program representation.

Variables are columns 0..n-1; expressions reuse the graph node classes
with VarRef.var holding the column index. The objective sense is always
minimization; transcription negates maximization objectives before
building the program.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NotLinear, UnboundReference
from ..expressions import (
    Binary,
    Const,
    SumExpr,
    Unary,
    VarRef,
    topo_order,
    _apply_binary,
    _apply_unary,
)


@dataclass
class VarSpec:
    lb: float = -math.inf
    ub: float = math.inf
    integrality: str = "continuous"
    start: float | None = None
    label: str = ""


@dataclass
class Row:
    expr: object
    relation: str  # "<=" | ">=" | "=="
    rhs: float
    label: str = ""


@dataclass
class FiniteProgram:
    variables: list = field(default_factory=list)
    objective: object = None
    constraints: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.variables)

    @property
    def m(self):
        return len(self.constraints)


@dataclass
class Solution:
    status: str  # optimal | infeasible | unbounded | iteration-limit | node-limit
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    dual_objective: float | None = None
    kkt_residual: float | None = None
    violation: float | None = None
    gap: float | None = None
    nodes: int | None = None
    iterations: int | None = None


def eval_expr(expr, x):
    """Evaluate a finite expression at point x (1-D array)."""
    vals = {}
    for node in topo_order(expr):
        if isinstance(node, Const):
            v = node.value
        elif isinstance(node, VarRef):
            v = float(x[node.var])
        elif isinstance(node, Unary):
            v = _apply_unary(node.op, vals[id(node.arg)])
        elif isinstance(node, Binary):
            v = _apply_binary(node.op, vals[id(node.lhs)], vals[id(node.rhs)])
        elif isinstance(node, SumExpr):
            v = math.fsum(vals[id(t)] for t in node.terms)
        else:
            raise UnboundReference(
                f"{type(node).__name__} nodes cannot appear in a finite program")
        vals[id(node)] = v
    return vals[id(expr)]


def eval_program(p, x):
    """Objective value and constraint left-hand-side values at x."""
    obj = eval_expr(p.objective, x) if p.objective is not None else 0.0
    cons = np.array([eval_expr(r.expr, x) for r in p.constraints])
    return obj, cons


def effective_bounds(spec):
    """Declared bounds, intersected with [0, 1] for binary variables.

    Binary membership is part of the variable's definition, so solvers
    see the clamp even when a hand-built or imported spec left the
    bounds open.
    """
    if spec.integrality == "binary":
        return max(spec.lb, 0.0), min(spec.ub, 1.0)
    return spec.lb, spec.ub


def max_violation(p, x):
    """Largest absolute constraint violation plus bound violation at x."""
    worst = 0.0
    for r in p.constraints:
        v = eval_expr(r.expr, x)
        if r.relation == "<=":
            worst = max(worst, v - r.rhs)
        elif r.relation == ">=":
            worst = max(worst, r.rhs - v)
        else:
            worst = max(worst, abs(v - r.rhs))
    for j, spec in enumerate(p.variables):
        lb, ub = effective_bounds(spec)
        worst = max(worst, lb - x[j], x[j] - ub)
    return float(worst)


def linear_coeffs(expr):
    """Extract (coefficients by column, constant) from a linear expression.

    Raises NotLinear on products of variables, nonlinear functions, or
    powers other than 0 and 1.
    """

    def walk(node):
        if isinstance(node, Const):
            return {}, node.value
        if isinstance(node, VarRef):
            return {node.var: 1.0}, 0.0
        if isinstance(node, Unary):
            if node.op != "neg":
                raise NotLinear(f"'{node.op}' is not linear")
            c, k = walk(node.arg)
            return {i: -v for i, v in c.items()}, -k
        if isinstance(node, SumExpr):
            coeffs, const = {}, 0.0
            for t in node.terms:
                c, k = walk(t)
                const += k
                for i, v in c.items():
                    coeffs[i] = coeffs.get(i, 0.0) + v
            return coeffs, const
        if isinstance(node, Binary):
            if node.op in ("add", "sub"):
                cl, kl = walk(node.lhs)
                cr, kr = walk(node.rhs)
                sgn = 1.0 if node.op == "add" else -1.0
                for i, v in cr.items():
                    cl[i] = cl.get(i, 0.0) + sgn * v
                return cl, kl + sgn * kr
            if node.op == "mul":
                cl, kl = walk(node.lhs)
                cr, kr = walk(node.rhs)
                if cl and cr:
                    raise NotLinear("product of variables is not linear")
                if cl:
                    return {i: v * kr for i, v in cl.items()}, kl * kr
                return {i: v * kl for i, v in cr.items()}, kl * kr
            if node.op == "div":
                cr, kr = walk(node.rhs)
                if cr:
                    raise NotLinear("division by a variable is not linear")
                if kr == 0.0:
                    raise NotLinear("division by zero constant")
                cl, kl = walk(node.lhs)
                return {i: v / kr for i, v in cl.items()}, kl / kr
            if node.op == "pow":
                cr, kr = walk(node.rhs)
                if cr:
                    raise NotLinear("variable exponent")
                cl, kl = walk(node.lhs)
                if not cl:
                    return {}, _safe_pow(kl, kr)
                if kr == 1.0:
                    return cl, kl
                if kr == 0.0:
                    return {}, 1.0
                raise NotLinear(f"power {kr} is not linear")
        raise NotLinear(f"{type(node).__name__} is not linear")

    return walk(expr)


def _safe_pow(a, b):
    try:
        return math.pow(a, b)
    except (ValueError, OverflowError):
        raise NotLinear(f"constant pow({a}, {b}) undefined") from None


def is_linear(expr):
    try:
        linear_coeffs(expr)
        return True
    except NotLinear:
        return False


def program_kind(p):
    """Classify: "lp", "mip", "nlp", or "minlp"."""
    linear = (p.objective is None or is_linear(p.objective)) and \
        all(is_linear(r.expr) for r in p.constraints)
    discrete = any(v.integrality != "continuous" for v in p.variables)
    if linear:
        return "mip" if discrete else "lp"
    return "minlp" if discrete else "nlp"


# -- JSON export / import -------------------------------------------------

SCHEMA = "contopt-finite-program/1"

_UNARY_TAG = {"neg": "neg", "exp": "exp", "log": "log", "sqrt": "sqrt", "abs": "abs"}
_BINARY_TAG = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
_TAG_BINARY = {v: k for k, v in _BINARY_TAG.items()}


def _expr_to_json(node):
    if isinstance(node, Const):
        return float(node.value)
    if isinstance(node, VarRef):
        return ["var", node.var]
    if isinstance(node, Unary):
        return [_UNARY_TAG[node.op], _expr_to_json(node.arg)]
    if isinstance(node, Binary):
        return [_BINARY_TAG[node.op], _expr_to_json(node.lhs), _expr_to_json(node.rhs)]
    if isinstance(node, SumExpr):
        return ["sum"] + [_expr_to_json(t) for t in node.terms]
    raise UnboundReference(f"cannot serialize {type(node).__name__}")


def _expr_from_json(doc, nvars):
    if isinstance(doc, (int, float)) and not isinstance(doc, bool):
        return Const(float(doc))
    if not isinstance(doc, list) or not doc:
        raise ValueError(f"bad expression node: {doc!r}")
    tag = doc[0]
    if tag == "var":
        i = int(doc[1])
        if not 0 <= i < nvars:
            raise ValueError(f"variable index {i} out of range")
        return VarRef(i)
    if tag == "sum":
        return SumExpr(tuple(_expr_from_json(d, nvars) for d in doc[1:]))
    if tag in _UNARY_TAG:
        if len(doc) != 2:
            raise ValueError(f"'{tag}' takes one argument")
        return Unary(tag, _expr_from_json(doc[1], nvars))
    if tag in _TAG_BINARY:
        if len(doc) != 3:
            raise ValueError(f"'{tag}' takes two arguments")
        rhs = _expr_from_json(doc[2], nvars)
        if tag == "^" and not isinstance(rhs, Const):
            raise ValueError("pow exponent must be a constant")
        return Binary(_TAG_BINARY[tag], _expr_from_json(doc[1], nvars), rhs)
    raise ValueError(f"unknown expression tag {tag!r}")


def _num_or_null(v):
    if v is None or math.isinf(v):
        return None
    return float(v)


def export_json(p, indent=None):
    """Serialize a finite program; floats round-trip bit-exactly.

    Bounds of minus/plus infinity are encoded as null.
    """
    doc = {
        "schema": SCHEMA,
        "variables": [
            {"label": v.label, "lb": _num_or_null(v.lb), "ub": _num_or_null(v.ub),
             "integrality": v.integrality,
             "start": None if v.start is None else float(v.start)}
            for v in p.variables
        ],
        "objective": _expr_to_json(p.objective) if p.objective is not None else 0.0,
        "constraints": [
            {"label": r.label, "expr": _expr_to_json(r.expr),
             "relation": r.relation, "rhs": float(r.rhs)}
            for r in p.constraints
        ],
    }
    return json.dumps(doc, indent=indent, allow_nan=False)


def import_json(text):
    """Parse a program serialized by export_json."""
    doc = json.loads(text) if isinstance(text, str) else text
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unknown schema {doc.get('schema')!r}")
    variables = []
    for v in doc["variables"]:
        integrality = v.get("integrality", "continuous")
        if integrality not in ("continuous", "binary", "integer"):
            raise ValueError(f"unknown integrality {integrality!r}")
        variables.append(VarSpec(
            lb=-math.inf if v.get("lb") is None else float(v["lb"]),
            ub=math.inf if v.get("ub") is None else float(v["ub"]),
            integrality=integrality,
            start=None if v.get("start") is None else float(v["start"]),
            label=v.get("label", "")))
    n = len(variables)
    constraints = []
    for r in doc["constraints"]:
        if r["relation"] not in ("<=", ">=", "=="):
            raise ValueError(f"unknown relation {r['relation']!r}")
        constraints.append(Row(expr=_expr_from_json(r["expr"], n), relation=r["relation"],
                               rhs=float(r["rhs"]), label=r.get("label", "")))
    return FiniteProgram(variables=variables,
                         objective=_expr_from_json(doc["objective"], n),
                         constraints=constraints)

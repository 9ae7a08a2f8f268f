"""Measure operators: integrals, expectations, risk, and event probability.

A measure collapses one parameter of its body. Transcription replaces
each measure by a weighted sum over the parameter's supports; the
coefficient rules live here so tests can check them directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlphaOutOfRange,
    BadBigM,
    BadWeights,
    EmptySupports,
    MissingDependency,
    UnsupportedLogic,
    UnsupportedScheme,
)
from .expressions import MeasureRef, VarRef, as_expr, esum, parameter_deps


@dataclass
class MeasureApprox:
    """Finite approximation M = sum_i coeffs[i] * body(points[i])."""

    points: np.ndarray
    coeffs: np.ndarray


def trapezoid_coeffs(values):
    """Composite trapezoid weights over sorted support values."""
    d = np.asarray(values, dtype=float)
    if d.size < 2:
        raise EmptySupports(f"trapezoid rule needs at least 2 supports, got {d.size}")
    beta = np.zeros(d.size)
    beta[0] = 0.5 * (d[1] - d[0])
    beta[-1] = 0.5 * (d[-1] - d[-2])
    if d.size > 2:
        beta[1:-1] = 0.5 * (d[2:] - d[:-2])
    return beta


def integral(model, body, param, weight=None) -> MeasureRef:
    """Integral of body over an interval parameter, optionally weighted.

    The weight is a parameter function evaluated at each support and
    multiplied into the quadrature coefficient.
    """
    ph = model._h(param)
    p = model.param_record(ph)
    if p.domain.is_distribution:
        raise UnsupportedScheme(
            f"'{p.label}' is a random parameter; use expectation instead of integral")
    return model._add_measure("integral", as_expr(body), ph, weight=weight)


def expectation(model, body, param) -> MeasureRef:
    """Expectation of body over one parameter.

    Over a random parameter the supports are samples and each carries
    weight 1/N. Over an interval parameter the parameter is treated as
    uniformly distributed: quadrature coefficients scaled by the inverse
    interval length.
    """
    ph = model._h(param)
    model.param_record(ph)
    return model._add_measure("expectation", as_expr(body), ph)


def excursion_time(model, body, param, threshold) -> MeasureRef:
    """Fraction of the parameter's supports where body exceeds threshold.

    Creates an event-probability measure evaluated after solving by
    counting supports with equal weight 1/N.
    """
    ph = model._h(param)
    model.param_record(ph)
    body = as_expr(body)
    if ph not in parameter_deps(model, body):
        raise MissingDependency("excursion body does not depend on the parameter")
    return model._add_measure("event_prob", body, ph, threshold=float(threshold))


def measure_coefficients(model, measure, support_values):
    """Coefficients beta_i for one measure over the given support values.

    support_values: (n, dim) array of the parameter's (possibly extended)
    supports. The optional integral weight function is not folded in
    here; transcription multiplies it per support.
    """
    m = model.measure_record(measure)
    p = model.param_record(m.over)
    pts = np.asarray(support_values, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n == 0:
        raise EmptySupports(f"parameter '{p.label}' has no supports")

    if m.kind == "event_prob":
        return np.full(n, 1.0 / n)

    if p.domain.is_distribution:
        if m.kind == "integral":
            raise UnsupportedScheme("integral over a random parameter; use expectation")
        return np.full(n, 1.0 / n)

    # interval parameter: quadrature coefficients
    ss = p.supports
    if (ss is not None and ss.scheme == "gauss-legendre" and ss.weights is not None
            and len(ss.weights) == n):
        beta = np.array(ss.weights, dtype=float)
    else:
        beta = trapezoid_coeffs(pts[:, 0])
    if m.kind == "expectation":
        beta = beta / (p.domain.hi - p.domain.lo)
    return beta


def approximate(model, measure) -> MeasureApprox:
    """Finite approximation of a measure at the parameter's current supports."""
    m = model.measure_record(measure)
    p = model.param_record(m.over)
    if p.supports is None or len(p.supports) == 0:
        raise EmptySupports(f"parameter '{p.label}' has no supports")
    pts = p.supports.points
    return MeasureApprox(points=pts.copy(), coeffs=measure_coefficients(model, measure, pts))


def quantile(values, weights=None, alpha=0.5):
    """Smallest value whose cumulative weight reaches alpha.

    weights default to 1/N; they must be nonnegative and sum to one.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise EmptySupports("quantile of an empty list")
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 1], got {alpha}")
    if weights is None:
        w = np.full(vals.size, 1.0 / vals.size)
    else:
        w = np.asarray(weights, dtype=float)
        if w.size != vals.size:
            raise BadWeights(f"{vals.size} values but {w.size} weights")
        if np.any(w < 0):
            raise BadWeights("quantile weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise BadWeights(f"quantile weights sum to {w.sum()}, expected 1")
    order = np.argsort(vals, kind="stable")
    cum = 0.0
    for i in order:
        cum += w[i]
        if cum >= alpha - 1e-12:
            return float(vals[i])
    return float(vals[order[-1]])


@dataclass
class CvarExpansion:
    """Variables and objective produced by the risk-measure epigraph expansion."""

    z: VarRef        # value-at-risk estimate (finite, free)
    excess: VarRef   # nonnegative excess above z, over the parameter
    constraint: int  # excess >= body - z
    objective: object  # z + 1/(1-alpha) * E[excess]


def cvar(model, body, param, alpha, label=None) -> CvarExpansion:
    """Conditional value-at-risk of body over one parameter, epigraph form.

    CVaR(f; alpha) = min_z z + 1/(1-alpha) E[max(f - z, 0)]. Returns the
    expansion whose objective term realizes that minimum: a free scalar
    z, a nonnegative excess variable over the parameter, and the
    constraint excess >= body - z. At alpha = 0 the value is the mean;
    as alpha approaches 1 it approaches the worst case.
    """
    if not 0.0 <= alpha < 1.0:
        raise AlphaOutOfRange(f"cvar needs alpha in [0, 1), got {alpha}")
    ph = model._h(param)
    p = model.param_record(ph)
    body = as_expr(body)
    deps = parameter_deps(model, body)
    if ph not in deps:
        raise MissingDependency(f"cvar body does not depend on parameter '{p.label}'")
    base = label or "cvar"
    z = model.add_variable(model._auto_label(f"{base}.z"))
    excess = model.add_variable(model._auto_label(f"{base}.excess"),
                                deps=tuple(sorted(deps)), lb=0.0)
    con = model.add_constraint(excess - body + z, ">=", 0.0,
                               label=model._auto_label(f"{base}.def"))
    obj = z + (1.0 / (1.0 - alpha)) * expectation(model, excess, ph)
    return CvarExpansion(z=z, excess=excess, constraint=con, objective=obj)


# -- event trees and big-M reformulation ---------------------------------


@dataclass(frozen=True)
class Atom:
    """Relational leaf h <= rhs (satisfaction form) or h > rhs (violation form).

    big_m, when set, overrides the event-level constant for this atom
    alone. A bound-derived value (largest reachable h minus rhs) keeps
    the relaxation much tighter than one blanket constant.
    """

    expr: object
    relation: str  # "<=" | ">"
    rhs: float
    big_m: float = None


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


def _depth(node):
    if isinstance(node, Atom):
        return 0
    return 1 + max(_depth(c) for c in node.children)


def _atoms(node):
    if isinstance(node, Atom):
        return [node]
    out = []
    for c in node.children:
        out.extend(_atoms(c))
    return out


@dataclass
class EventReformulation:
    indicator: VarRef
    binaries: list
    prob_constraint: int
    bigm_constraints: list


def reformulate_event(model, tree, param, alpha, direction="at-least", big_m=None,
                      label=None) -> EventReformulation:
    """Big-M reformulation of a probabilistic event constraint.

    at-least: P(tree) >= alpha. The indicator binary marks supports where
    the event is allowed to fail, and E[1 - y] >= alpha bounds their
    probability. An And of atoms shares one binary (joint chance); an Or
    node gets one binary per child linked by y_or >= sum(y_child) - (n-1).

    at-most: P(tree) <= alpha. The indicator is forced to one wherever
    the tree holds and E[y] <= alpha bounds it from above. An Or of
    violation atoms shares one binary (excursion form).

    Boundary cases are non-strict: big-M constraints cannot separate
    h = rhs from h > rhs at the boundary.
    """
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 1], got {alpha}")
    if big_m is None or not math.isfinite(big_m) or big_m <= 0:
        raise BadBigM(f"big-M constant must be positive and finite, got {big_m}")
    if direction not in ("at-least", "at-most"):
        raise UnsupportedLogic(f"unknown direction '{direction}'")
    ph = model._h(param)
    p = model.param_record(ph)
    if not isinstance(tree, (Atom, And, Or)):
        raise UnsupportedLogic(f"event tree must be Atom/And/Or, got {type(tree).__name__}")
    if _depth(tree) > 2:
        raise UnsupportedLogic("event trees deeper than two levels have no reformulation here")
    atoms = _atoms(tree)
    if not atoms:
        raise UnsupportedLogic("event tree has no atoms")
    if not any(ph in parameter_deps(model, as_expr(a.expr)) for a in atoms):
        raise MissingDependency(
            f"no atom depends on parameter '{p.label}'; the event is deterministic")
    for a in atoms:
        if a.relation not in ("<=", ">"):
            raise UnsupportedLogic(f"atom relation must be <= or >, got '{a.relation}'")
        if a.big_m is not None and (not math.isfinite(a.big_m) or a.big_m <= 0):
            raise BadBigM(f"atom big-M override must be positive and finite, got {a.big_m}")

    base = label or "event"
    binaries = []
    bigm_cons = []

    def new_binary(tag):
        v = model.add_variable(model._auto_label(f"{base}.{tag}"), deps=(ph,),
                               integrality="binary")
        binaries.append(v)
        return v

    def force_true(node, y):
        # constraints ensuring y = 0 implies node holds
        if isinstance(node, Atom):
            if node.relation != "<=":
                raise UnsupportedLogic(
                    "at-least events need satisfaction atoms (h <= rhs)")
            m_here = big_m if node.big_m is None else node.big_m
            bigm_cons.append(model.add_constraint(
                as_expr(node.expr) - node.rhs - m_here * y, "<=", 0.0))
        elif isinstance(node, And):
            for c in node.children:
                if isinstance(c, Atom):
                    force_true(c, y)  # atoms of an And share the node binary
                else:
                    yc = new_binary("sub")
                    force_true(c, yc)
                    model.add_constraint(yc - y, "<=", 0.0)
        elif isinstance(node, Or):
            subs = []
            for c in node.children:
                yc = new_binary("sub")
                force_true(c, yc)
                subs.append(yc)
            # all children violated forces the node binary to one
            model.add_constraint(esum(subs) - y, "<=", float(len(subs) - 1))

    def force_indicator(node, y):
        # constraints ensuring node holds implies y = 1
        if isinstance(node, Atom):
            h = as_expr(node.expr)
            lhs = (h - node.rhs) if node.relation == ">" else (node.rhs - h)
            m_here = big_m if node.big_m is None else node.big_m
            bigm_cons.append(model.add_constraint(lhs - m_here * y, "<=", 0.0))
        elif isinstance(node, Or):
            for c in node.children:
                if isinstance(c, Atom):
                    force_indicator(c, y)  # any true atom trips the shared binary
                else:
                    yc = new_binary("sub")
                    force_indicator(c, yc)
                    model.add_constraint(yc - y, "<=", 0.0)
        elif isinstance(node, And):
            subs = []
            for c in node.children:
                yc = new_binary("sub")
                force_indicator(c, yc)
                subs.append(yc)
            model.add_constraint(esum(subs) - y, "<=", float(len(subs) - 1))

    top = new_binary("ind")
    if direction == "at-least":
        force_true(tree, top)
        prob = model.add_constraint(expectation(model, 1.0 - top, ph), ">=", float(alpha),
                                    label=model._auto_label(f"{base}.prob"))
    else:
        force_indicator(tree, top)
        prob = model.add_constraint(expectation(model, top, ph), "<=", float(alpha),
                                    label=model._auto_label(f"{base}.prob"))
    return EventReformulation(indicator=top, binaries=binaries,
                              prob_constraint=prob, bigm_constraints=bigm_cons)

"""Derivative lifting and defining relations.

A derivative never appears symbolically: deriv(y, t) creates an
auxiliary infinite variable y' with the same dependencies, and the
transcription emits scheme-specific relations tying y' to y along the
parameter's supports. No relation is generated at the first support so
initial conditions can bind there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import domains as dom
from .errors import BadNodeCount, MissingDependency, NotInfinite, TooFewSupports, UnsupportedScheme
from .expressions import VarRef


@dataclass(frozen=True)
class Relation:
    """Linear relation sum(c * y[i]) + sum(c * dy[i]) = 0 over support indices."""

    y_terms: tuple  # ((support index, coefficient), ...)
    dy_terms: tuple


def normalize_scheme(scheme):
    if scheme in ("backward", "forward", "central"):
        return ("fd", scheme)
    if isinstance(scheme, (tuple, list)) and len(scheme) == 2 and scheme[0] == "ocfe":
        n = int(scheme[1])
        if n < 2:
            raise BadNodeCount(f"collocation needs at least 2 nodes per element, got {n}")
        return ("ocfe", n)
    raise UnsupportedScheme(f"unknown derivative scheme {scheme!r}")


def lift(model, var, param) -> VarRef:
    """Create (or return) the lifted derivative variable of var w.r.t. param."""
    vh = model._h(var)
    ph = model._h(param)
    v = model.var_record(vh)
    p = model.param_record(ph)
    if v.kind != "infinite":
        raise NotInfinite(f"cannot differentiate {v.kind} variable '{v.label}'")
    if ph not in v.deps:
        raise MissingDependency(f"variable '{v.label}' does not depend on parameter '{p.label}'")
    if p.dim != 1:
        raise UnsupportedScheme("derivatives are supported along one-dimensional parameters only")
    if p.domain.is_distribution:
        raise UnsupportedScheme(
            f"'{p.label}' is a random parameter; derivatives are defined along intervals only")
    key = (vh, ph)
    if key in model._deriv_cache:
        return VarRef(model.derivatives[model._deriv_cache[key]].lifted)
    lifted = model.add_variable(model._auto_label(f"d({v.label})/d({p.label})"), deps=v.deps)
    h = model._handle()
    from .model import Derivative

    model.derivatives[h] = Derivative(handle=h, var=vh, param=ph, lifted=lifted.handle)
    model._deriv_cache[key] = h
    return lifted


def fd_relations(values, kind="backward"):
    """Finite-difference defining relations over sorted support values.

    backward: y(i) = y(i-1) + (d_i - d_{i-1}) y'(i)     for i = 1..N-1
    forward:  y(i+1) = y(i) + (d_{i+1} - d_i) y'(i)     for i = 0..N-2
    central:  y(i+1) = y(i-1) + (d_{i+1} - d_{i-1}) y'(i) at interior i,
              falling back to backward at the last support.
    """
    d = np.asarray(values, dtype=float)
    n = d.size
    if n < 2:
        raise TooFewSupports(f"finite differences need at least 2 supports, got {n}")
    rels = []
    if kind == "backward":
        for i in range(1, n):
            rels.append(Relation(y_terms=((i, 1.0), (i - 1, -1.0)),
                                 dy_terms=((i, -(d[i] - d[i - 1])),)))
    elif kind == "forward":
        for i in range(0, n - 1):
            rels.append(Relation(y_terms=((i + 1, 1.0), (i, -1.0)),
                                 dy_terms=((i, -(d[i + 1] - d[i])),)))
    elif kind == "central":
        if n < 3:
            raise TooFewSupports(f"central differences need at least 3 supports, got {n}")
        for i in range(1, n - 1):
            rels.append(Relation(y_terms=((i + 1, 1.0), (i - 1, -1.0)),
                                 dy_terms=((i, -(d[i + 1] - d[i - 1])),)))
        rels.append(Relation(y_terms=((n - 1, 1.0), (n - 2, -1.0)),
                             dy_terms=((n - 1, -(d[n - 1] - d[n - 2])),)))
    else:
        raise UnsupportedScheme(f"unknown finite-difference kind '{kind}'")
    return rels


def lagrange_diff_matrix(nodes):
    """D[k, j] = derivative of the j-th Lagrange basis at node k (barycentric form)."""
    x = np.asarray(nodes, dtype=float)
    n = x.size
    w = np.ones(n)
    for j in range(n):
        for m in range(n):
            if m != j:
                w[j] /= x[j] - x[m]
    D = np.zeros((n, n))
    for k in range(n):
        for j in range(n):
            if j != k:
                D[k, j] = (w[j] / w[k]) / (x[k] - x[j])
        D[k, k] = -np.sum(D[k, :k]) - np.sum(D[k, k + 1:])
    return D

def ocfe_relations(boundaries, n_nodes):
    """Collocation over finite elements between consecutive boundary supports.

    Each element gets Gauss-Lobatto nodes (endpoints included; interior
    nodes become new supports). At every non-initial node of an element
    the polynomial derivative must match the lifted variable:
    sum_j l'_j(tau_k) y(tau_j) = y'(tau_k). With 2 nodes this reduces to
    the backward difference.

    Returns (all support values including added nodes, relations indexed
    into that list).
    """
    if n_nodes < 2:
        raise BadNodeCount(f"collocation needs at least 2 nodes per element, got {n_nodes}")
    b = np.asarray(boundaries, dtype=float)
    if b.size < 2:
        raise TooFewSupports(f"collocation needs at least 2 boundary supports, got {b.size}")
    ref = dom.gauss_lobatto(n_nodes)
    supports = [b[0]]
    relations = []
    for e in range(b.size - 1):
        a, c = b[e], b[e + 1]
        phys = np.round(0.5 * (a + c) + 0.5 * (c - a) * ref, dom.DEDUP_DECIMALS)
        phys[0], phys[-1] = a, c  # keep element edges exactly at the boundary supports
        base = e * (n_nodes - 1)
        D = lagrange_diff_matrix(phys)
        for k in range(1, n_nodes):
            y_terms = tuple((base + j, D[k, j]) for j in range(n_nodes))
            relations.append(Relation(y_terms=y_terms, dy_terms=((base + k, -1.0),)))
        supports.extend(phys[1:])
    return np.array(supports), relations

"""Vectorized evaluation of many structurally identical expressions.

Transcription instantiates the same constraint template at every
support, so a program's rows cluster into a handful of shapes. Rows with
the same shape share one tape executed on numpy arrays: evaluating or
differentiating thousands of rows costs a few vector operations per
node instead of a Python loop per row. Used by the NLP solver; domain
violations here follow IEEE semantics (nan/inf) and are handled by the
caller.
"""

from __future__ import annotations

import numpy as np

from ..errors import UnboundReference
from ..expressions import Binary, Const, SumExpr, Unary, VarRef


def _flatten(expr):
    sig = []
    tape = []
    var_slots = []
    const_slots = []

    def rec(node):
        if isinstance(node, Const):
            sig.append("c")
            const_slots.append(node.value)
            tape.append(("c", len(const_slots) - 1))
        elif isinstance(node, VarRef):
            sig.append("v")
            var_slots.append(node.var)
            tape.append(("v", len(var_slots) - 1))
        elif isinstance(node, Unary):
            i = rec(node.arg)
            sig.append("u:" + node.op)
            tape.append(("u", node.op, i))
        elif isinstance(node, Binary):
            i = rec(node.lhs)
            j = rec(node.rhs)
            sig.append("b:" + node.op)
            tape.append(("b", node.op, i, j))
        elif isinstance(node, SumExpr):
            idx = tuple(rec(t) for t in node.terms)
            sig.append(f"s:{len(idx)}")
            tape.append(("s", idx))
        else:
            raise UnboundReference(
                f"{type(node).__name__} nodes cannot appear in a finite program")
        return len(tape) - 1

    rec(expr)
    return tuple(sig), tape, var_slots, const_slots


_UNARY_FN = {
    "neg": np.negative,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


class _Family:
    def __init__(self, tape):
        self.tape = tape
        self.rows = []        # row positions in the stacked output
        self.var_cols = []    # per row: list of variable indices by slot
        self.const_cols = []  # per row: list of constants by slot

    def freeze(self):
        nrows = len(self.rows)
        self.rows = np.asarray(self.rows, dtype=np.intp)
        self.var_cols = np.asarray(self.var_cols, dtype=np.intp)
        self.const_cols = np.asarray(self.const_cols, dtype=float)
        if self.var_cols.size == 0:
            self.var_cols = self.var_cols.reshape(nrows, 0)
        if self.const_cols.size == 0:
            self.const_cols = self.const_cols.reshape(nrows, 0)

    def forward(self, x):
        vals = [None] * len(self.tape)
        with np.errstate(all="ignore"):
            for i, step in enumerate(self.tape):
                kind = step[0]
                if kind == "v":
                    vals[i] = x[self.var_cols[:, step[1]]]
                elif kind == "c":
                    vals[i] = self.const_cols[:, step[1]]
                elif kind == "u":
                    vals[i] = _UNARY_FN[step[1]](vals[step[2]])
                elif kind == "b":
                    a, b = vals[step[2]], vals[step[3]]
                    op = step[1]
                    if op == "add":
                        vals[i] = a + b
                    elif op == "sub":
                        vals[i] = a - b
                    elif op == "mul":
                        vals[i] = a * b
                    elif op == "div":
                        vals[i] = a / b
                    else:
                        vals[i] = np.power(a, b)
                else:
                    acc = vals[step[1][0]].copy()
                    for k in step[1][1:]:
                        acc += vals[k]
                    vals[i] = acc
        return vals

    def backward(self, x, vals, seed, grad_out):
        adj = [None] * len(self.tape)
        adj[-1] = seed
        with np.errstate(all="ignore"):
            for i in range(len(self.tape) - 1, -1, -1):
                a = adj[i]
                if a is None:
                    continue
                step = self.tape[i]
                kind = step[0]
                if kind == "v":
                    col = self.var_cols[:, step[1]]
                    grad_out += np.bincount(col, weights=a, minlength=grad_out.size)
                elif kind == "u":
                    op, ci = step[1], step[2]
                    if op == "neg":
                        d = -a
                    elif op == "exp":
                        d = a * vals[i]
                    elif op == "log":
                        d = a / vals[ci]
                    elif op == "sqrt":
                        d = a * 0.5 / vals[i]
                    else:  # abs
                        d = a * np.sign(vals[ci])
                    adj[ci] = d if adj[ci] is None else adj[ci] + d
                elif kind == "b":
                    op, li, ri = step[1], step[2], step[3]
                    lv, rv = vals[li], vals[ri]
                    if op == "add":
                        dl, dr = a, a
                    elif op == "sub":
                        dl, dr = a, -a
                    elif op == "mul":
                        dl, dr = a * rv, a * lv
                    elif op == "div":
                        dl = a / rv
                        dr = -a * lv / (rv * rv)
                    else:  # pow, constant exponent
                        dl = a * rv * np.power(lv, rv - 1.0)
                        dr = None
                    adj[li] = dl if adj[li] is None else adj[li] + dl
                    if dr is not None:
                        adj[ri] = dr if adj[ri] is None else adj[ri] + dr
                elif kind == "s":
                    for k in step[1]:
                        adj[k] = a if adj[k] is None else adj[k] + a


class Compiled:
    """Batched evaluator for a list of expressions over n variables."""

    def __init__(self, exprs, nvars):
        self.nvars = nvars
        self.m = len(exprs)
        fams = {}
        for row, e in enumerate(exprs):
            sig, tape, var_slots, const_slots = _flatten(e)
            fam = fams.get(sig)
            if fam is None:
                fam = fams[sig] = _Family(tape)
            fam.rows.append(row)
            fam.var_cols.append(var_slots)
            fam.const_cols.append(const_slots)
        self.families = list(fams.values())
        for f in self.families:
            f.freeze()

    def values(self, x):
        out = np.empty(self.m)
        for f in self.families:
            out[f.rows] = f.forward(x)[-1]
        return out

    def values_and_vjp(self, x, w):
        """Row values and the weighted gradient sum_i w[i] * grad row_i."""
        out = np.empty(self.m)
        g = np.zeros(self.nvars)
        for f in self.families:
            vals = f.forward(x)
            out[f.rows] = vals[-1]
            f.backward(x, vals, np.asarray(w)[f.rows], g)
        return out, g

"""Text format for models: line-oriented sections, parsed with positions.

A model file is a sequence of sections introduced by headers like
[params] or [constraints]. Lines inside a section are either key =
value declarations or expression strings; # starts a comment. The full
grammar lives in docs/modelfile.md. parse_model returns a validated
Model on success and a list of Diag records (each with line and
column) on any failure; it never hands back a half-built model.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .domains import Interval, MvNormal, Normal, Uniform
from .errors import ContoptError
from .expressions import Const, ParamFuncRef, ParamRef, VarRef, abs_, exp, log, sqrt
from .measures import And, Atom, Or, reformulate_event
from .model import Model

import operator

OPS = {"+": operator.add, "-": operator.sub, "*": operator.mul,
       "/": operator.truediv, "^": operator.pow}

SECTIONS = ("params", "functions", "vars", "defs", "constraints",
            "objective", "events", "options")

# options keys with a fixed meaning; placeholder names are allowed too
KNOWN_OPTIONS = ("cap", "discrete_cap", "max_nodes", "max_outer", "max_iter",
                 "tol_feas", "tol_kkt")


@dataclass
class Diag:
    """One parse problem, anchored to a line and column of the source."""

    line: int
    col: int
    message: str

    def __str__(self):
        return f"{self.line}:{self.col}: {self.message}"


@dataclass
class EventBinding:
    """What an [events] line produced, kept for reporting after a solve."""

    name: str
    tree: object
    param: int
    alpha: float
    direction: str
    big_m: float
    reformulation: object


class _LineError(Exception):
    def __init__(self, line, col, message):
        super().__init__(message)
        self.line = line
        self.col = col
        self.message = message


# -- tokenizer ------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<num>(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<ph>\$[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|[-+*/^()\[\],;:=<>@])
  | (?P<ws>[ \t]+)
""", re.X)


@dataclass
class _Tok:
    kind: str  # num | ident | ph | op | end
    text: str
    line: int
    col: int


def _tokenize(line_no, text):
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise _LineError(line_no, pos + 1, f"unexpected character '{text[pos]}'")
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(), line_no, pos + 1))
        pos = m.end()
    out.append(_Tok("end", "", line_no, len(text) + 1))
    return out


# -- parse context --------------------------------------------------------

@dataclass
class _Ctx:
    placeholders: dict
    num_supports: dict
    seed: object
    model: Model = field(default_factory=Model)
    names: dict = field(default_factory=dict)   # name -> (kind, payload)
    events: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    option_defaults: dict = field(default_factory=dict)
    diags: list = field(default_factory=list)
    used_placeholders: set = field(default_factory=set)
    saw_objective: bool = False

    def bind(self, tok, kind, payload):
        if tok.text in self.names:
            raise _LineError(tok.line, tok.col, f"name '{tok.text}' is already declared")
        self.names[tok.text] = (kind, payload)

    def placeholder(self, tok):
        name = tok.text[1:]
        if name in self.placeholders:
            return float(self.placeholders[name])
        if name in self.option_defaults:
            return float(self.option_defaults[name])
        raise _LineError(tok.line, tok.col,
                         f"placeholder '{tok.text}' has no value (pass --{name} "
                         f"or set {name} = ... under [options])")


class _P:
    """Token cursor over one line with the shared parse context."""

    def __init__(self, ctx, tokens):
        self.ctx = ctx
        self.toks = tokens
        self.i = 0
        self.in_objective = False

    def peek(self, ahead=0):
        j = min(self.i + ahead, len(self.toks) - 1)
        return self.toks[j]

    def take(self):
        t = self.toks[self.i]
        if t.kind != "end":
            self.i += 1
        return t

    def at_op(self, *texts):
        t = self.peek()
        return t.kind == "op" and t.text in texts

    def at_ident(self, *texts):
        t = self.peek()
        return t.kind == "ident" and (not texts or t.text in texts)

    def expect_op(self, text):
        t = self.take()
        if t.kind != "op" or t.text != text:
            self.err(t, f"expected '{text}'")
        return t

    def expect_ident(self, what="a name"):
        t = self.take()
        if t.kind != "ident":
            self.err(t, f"expected {what}")
        return t

    def expect_end(self):
        t = self.peek()
        if t.kind != "end":
            self.err(t, f"unexpected '{t.text}'")

    def err(self, tok, message):
        raise _LineError(tok.line, tok.col, message)

    # -- constants --------------------------------------------------------

    def const(self):
        """Literal number: digits, placeholder, inf, with optional sign."""
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.take()
            return -self.const()
        if t.kind == "op" and t.text == "+":
            self.take()
            return self.const()
        if t.kind == "num":
            self.take()
            return float(t.text)
        if t.kind == "ph":
            self.take()
            return self.ctx.placeholder(t)
        if t.kind == "ident" and t.text == "inf":
            self.take()
            return math.inf
        self.err(t, "expected a number")

    def const_list(self):
        self.expect_op("[")
        vals = [self.const()]
        while self.at_op(","):
            self.take()
            vals.append(self.const())
        self.expect_op("]")
        return vals

    def const_or_list(self):
        if self.at_op("["):
            return tuple(self.const_list())
        return self.const()

    # -- expression grammar: ^  then unary -  then * /  then + - ---------
    # constant subtrees fold immediately so numeric rhs stays numeric and
    # pow exponents written as 3^2 reach the graph as plain constants

    @staticmethod
    def _apply(op, a, b):
        if isinstance(a, Const) and isinstance(b, Const):
            return Const(OPS[op](a.value, b.value))
        return OPS[op](a, b)

    def expr(self):
        e = self.term()
        while self.at_op("+", "-"):
            op = self.take().text
            e = self._apply(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.at_op("*", "/"):
            op = self.take().text
            e = self._apply(op, e, self.unary())
        return e

    def unary(self):
        if self.at_op("-"):
            self.take()
            e = self.unary()
            return Const(-e.value) if isinstance(e, Const) else -e
        if self.at_op("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.at_op("^"):
            self.take()
            return self._apply("^", base, self.unary())
        return base

    def atom(self):
        t = self.peek()
        if t.kind == "num":
            self.take()
            return Const(float(t.text))
        if t.kind == "ph":
            self.take()
            return Const(self.ctx.placeholder(t))
        if t.kind == "op" and t.text == "(":
            self.take()
            e = self.expr()
            self.expect_op(")")
            return e
        if t.kind == "ident":
            return self.name_atom()
        self.err(t, "expected an expression")

    # -- identifier resolution --------------------------------------------

    BUILTIN_FNS = {"exp": exp, "log": log, "sqrt": sqrt, "abs": abs_}

    def name_atom(self):
        t = self.take()
        name = t.text
        if name in self.BUILTIN_FNS:
            self.expect_op("(")
            arg = self.expr()
            self.expect_op(")")
            return self.BUILTIN_FNS[name](arg)
        if name == "D":
            return self.deriv_call(t)
        if name in ("integral", "expect"):
            return self.measure_call(t, name)
        if name == "cvar":
            return self.cvar_call(t)
        entry = self.ctx.names.get(name)
        if entry is None:
            self.err(t, f"unknown identifier '{name}'")
        kind, payload = entry
        if kind == "param":
            return self.param_atom(t, payload)
        if kind == "def":
            return payload
        if kind == "func":
            return self.func_atom(t, payload)
        if kind == "var":
            if self.at_op("("):
                return self.application(t, payload)
            return payload
        self.err(t, f"'{name}' is {'an' if kind == 'atom' else 'a'} {kind} "
                    "and cannot appear in an expression")

    def param_atom(self, tok, ref):
        p = self.ctx.model.param_record(ref)
        if self.at_op("["):
            self.take()
            idx_tok = self.take()
            if idx_tok.kind != "num":
                self.err(idx_tok, "expected a component index")
            k = int(float(idx_tok.text))
            self.expect_op("]")
            if not 1 <= k <= p.dim:
                self.err(idx_tok, f"'{p.label}' has components 1..{p.dim}")
            return ref[k - 1]
        if p.dim > 1:
            self.err(tok, f"'{p.label}' has {p.dim} components; pick one, e.g. {p.label}[1]")
        return ref

    def func_atom(self, tok, ref):
        # bare reference; f(t) with its own parameter is accepted as the same thing
        if not self.at_op("("):
            return ref
        self.take()
        arg = self.expect_ident("a parameter name")
        self.expect_op(")")
        f = self.ctx.model.func_record(ref)
        labels = [self.ctx.model.params[p].label for p in f.params]
        if [arg.text] != labels:
            self.err(arg, f"function '{tok.text}' is over ({', '.join(labels)})")
        return ref

    def application(self, tok, ref):
        """Variable restriction, e.g. ys(t=0) or w(xi=[0.1, 0.2])."""
        self.expect_op("(")
        fixings = {}
        while True:
            pname = self.expect_ident("a parameter name")
            entry = self.ctx.names.get(pname.text)
            if entry is None or entry[0] != "param":
                self.err(pname, f"'{pname.text}' is not a parameter")
            self.expect_op("=")
            fixings[entry[1]] = self.const_or_list()
            if not self.at_op(","):
                break
            self.take()
        self.expect_op(")")
        try:
            return self.ctx.model.restrict(ref, fixings)
        except ContoptError as e:
            self.err(tok, str(e))

    def deriv_call(self, tok):
        self.expect_op("(")
        vtok = self.expect_ident("a variable name")
        entry = self.ctx.names.get(vtok.text)
        if entry is None or entry[0] != "var":
            self.err(vtok, f"'{vtok.text}' is not a variable")
        self.expect_op(",")
        ptok = self.expect_ident("a parameter name")
        pentry = self.ctx.names.get(ptok.text)
        if pentry is None or pentry[0] != "param":
            self.err(ptok, f"'{ptok.text}' is not a parameter")
        self.expect_op(")")
        try:
            return self.ctx.model.deriv(entry[1], pentry[1])
        except ContoptError as e:
            self.err(tok, str(e))

    def measure_call(self, tok, kind):
        self.expect_op("(")
        body = self.expr()
        self.expect_op(",")
        ptok = self.expect_ident("a parameter name")
        entry = self.ctx.names.get(ptok.text)
        if entry is None or entry[0] != "param":
            self.err(ptok, f"'{ptok.text}' is not a parameter")
        self.expect_op(")")
        m = self.ctx.model
        try:
            if kind == "integral":
                return m.integral(body, entry[1])
            return m.expectation(body, entry[1])
        except ContoptError as e:
            self.err(tok, str(e))

    def cvar_call(self, tok):
        if not self.in_objective:
            self.err(tok, "cvar(...) is an objective form; it cannot appear here")
        self.expect_op("(")
        body = self.expr()
        self.expect_op(",")
        ptok = self.expect_ident("a parameter name")
        entry = self.ctx.names.get(ptok.text)
        if entry is None or entry[0] != "param":
            self.err(ptok, f"'{ptok.text}' is not a parameter")
        self.expect_op(";")
        key = self.expect_ident("alpha = ...")
        if key.text != "alpha":
            self.err(key, "cvar takes one keyword: alpha")
        self.expect_op("=")
        alpha = self.const()
        self.expect_op(")")
        try:
            expansion = self.ctx.model.cvar(body, entry[1], alpha)
        except ContoptError as e:
            self.err(tok, str(e))
        return expansion.objective

    # -- option tails (key=value and bare flags) --------------------------

    def option_tail(self, allowed_keys, flags=()):
        out = {}
        while self.peek().kind != "end":
            t = self.expect_ident("an option name")
            key = t.text
            if key in flags:
                if key in out:
                    self.err(t, f"'{key}' given twice")
                out[key] = True
                continue
            if key not in allowed_keys:
                self.err(t, f"unknown option '{key}'")
            if key in out:
                self.err(t, f"'{key}' given twice")
            self.expect_op("=")
            if key in ("supports", "bounds") and self.at_op("["):
                out[key] = self.const_list()
            elif key == "start" and self.peek().kind == "ident" \
                    and self.peek().text != "inf":
                out[key] = self.take()  # a declared function, resolved later
            elif key == "deriv":
                out[key] = self.deriv_value()
            elif key == "direction":
                out[key] = self.direction_value()
            elif key == "over":
                out[key] = self.expect_ident("a parameter name")
            else:
                out[key] = self.const()
        return out

    def deriv_value(self):
        t = self.expect_ident("a scheme name")
        if t.text in ("backward", "forward", "central"):
            return t.text
        if t.text == "ocfe":
            self.expect_op("(")
            n = self.const()
            self.expect_op(")")
            return ("ocfe", int(n))
        self.err(t, f"unknown derivative scheme '{t.text}'")

    def direction_value(self):
        t = self.expect_ident("at-least or at-most")
        word = t.text
        if self.at_op("-"):
            self.take()
            word += "-" + self.expect_ident("least or most").text
        word = word.replace("_", "-")
        if word not in ("at-least", "at-most"):
            self.err(t, f"direction must be at-least or at-most, got '{word}'")
        return word


# -- section handlers -----------------------------------------------------

def _handle_params(ctx, p):
    name = p.expect_ident("a parameter name")
    p.expect_op("=")
    kind = p.expect_ident("a domain")
    if kind.text == "interval":
        p.expect_op("(")
        lo = p.const()
        p.expect_op(",")
        hi = p.const()
        p.expect_op(")")
        opts = p.option_tail({"supports", "deriv"})
        domain = Interval(lo, hi)
    elif kind.text in ("uniform", "normal"):
        p.expect_op("(")
        a = p.const()
        p.expect_op(",")
        b = p.const()
        p.expect_op(")")
        opts = p.option_tail({"samples", "seed"})
        domain = Uniform(a, b) if kind.text == "uniform" else Normal(a, b)
    elif kind.text == "mvnormal":
        p.expect_op("(")
        mean = p.const_list()
        p.expect_op(",")
        var = p.const_list()
        p.expect_op(")")
        opts = p.option_tail({"samples", "seed"})
        if len(var) != len(mean):
            p.err(kind, f"mvnormal got {len(mean)} means but {len(var)} variances")
        cov = tuple(tuple(v if i == j else 0.0 for j in range(len(var)))
                    for i, v in enumerate(var))
        domain = MvNormal(tuple(mean), cov)
    else:
        p.err(kind, f"unknown domain '{kind.text}' "
                    "(interval, uniform, normal, mvnormal)")
    p.expect_end()

    ref = ctx.model.add_parameter(name.text, domain)
    ctx.bind(name, "param", ref)

    override = ctx.num_supports.get(name.text)
    if kind.text == "interval":
        if override is not None:
            ctx.model.generate_supports(ref, "uniform-grid", int(override))
        elif isinstance(opts.get("supports"), list):
            ctx.model.set_supports(ref, opts["supports"])
        elif "supports" in opts:
            ctx.model.generate_supports(ref, "uniform-grid", int(opts["supports"]))
        if "deriv" in opts:
            ctx.model.set_deriv_scheme(ref, opts["deriv"])
    else:
        n = int(override) if override is not None else int(opts.get("samples", 0))
        if n <= 0:
            p.err(name, f"sampled parameter '{name.text}' needs samples = N")
        seed = ctx.seed if ctx.seed is not None else int(opts.get("seed", 0))
        ctx.model.generate_supports(ref, "mc-sample", n, seed=seed)


def _make_sigmoid(b1, b2, b3, b4, b5):
    def fn(v):
        e = b4 * (v - b5)
        # keep exp out of overflow; the tail is flat anyway
        e = min(max(e, -700.0), 700.0)
        return b1 / (b2 + b3 * math.exp(e))
    return fn


def _handle_functions(ctx, p):
    name = p.expect_ident("a function name")
    p.expect_op("=")
    kind = p.expect_ident("sigmoid or table")
    p.expect_op("(")
    ptok = p.expect_ident("a parameter name")
    entry = ctx.names.get(ptok.text)
    if entry is None or entry[0] != "param":
        p.err(ptok, f"'{ptok.text}' is not a parameter")
    if kind.text == "sigmoid":
        betas = []
        for _ in range(5):
            p.expect_op(",")
            betas.append(p.const())
        p.expect_op(")")
        fn = _make_sigmoid(*betas)
    elif kind.text == "table":
        p.expect_op(",")
        xs = p.const_list()
        p.expect_op(",")
        ys = p.const_list()
        p.expect_op(")")
        if len(xs) != len(ys):
            p.err(kind, f"table got {len(xs)} points but {len(ys)} values")
        if len(xs) < 2:
            p.err(kind, "table needs at least two points")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            p.err(kind, "table points must be strictly increasing")
        xs_a, ys_a = np.asarray(xs, float), np.asarray(ys, float)

        def fn(v):
            return float(np.interp(v, xs_a, ys_a))
    else:
        p.err(kind, f"unknown function form '{kind.text}' (sigmoid, table)")
    p.expect_end()
    ref = ctx.model.add_function(name.text, (entry[1],), fn)
    ctx.bind(name, "func", ref)


def _handle_vars(ctx, p):
    name = p.expect_ident("a variable name")
    p.expect_op("=")
    kind = p.expect_ident("finite or infinite")
    deps = []
    if kind.text == "infinite":
        p.expect_op("(")
        while True:
            ptok = p.expect_ident("a parameter name")
            entry = ctx.names.get(ptok.text)
            if entry is None or entry[0] != "param":
                p.err(ptok, f"'{ptok.text}' is not a parameter")
            deps.append(entry[1])
            if not p.at_op(","):
                break
            p.take()
        p.expect_op(")")
    elif kind.text != "finite":
        p.err(kind, f"variable kind must be finite or infinite, got '{kind.text}'")
    opts = p.option_tail({"bounds", "start"}, flags=("binary", "integer"))
    p.expect_end()
    lb, ub = -math.inf, math.inf
    if "bounds" in opts:
        b = opts["bounds"]
        if not isinstance(b, list) or len(b) != 2:
            p.err(kind, "bounds takes [lo, hi]")
        lb, ub = b
    integrality = "continuous"
    if opts.get("binary") and opts.get("integer"):
        p.err(kind, "a variable cannot be both binary and integer")
    elif opts.get("binary"):
        integrality = "binary"
    elif opts.get("integer"):
        integrality = "integer"
    start = opts.get("start")
    if isinstance(start, _Tok):
        entry = ctx.names.get(start.text)
        if entry is None or entry[0] != "func":
            p.err(start, f"start profile '{start.text}' is not a declared function")
        start = entry[1]
    ref = ctx.model.add_variable(name.text, deps=deps, lb=lb, ub=ub,
                                 integrality=integrality, start=start)
    ctx.bind(name, "var", ref)


def _handle_defs(ctx, p):
    name = p.expect_ident("a definition name")
    p.expect_op("=")
    e = p.expr()
    p.expect_end()
    ctx.bind(name, "def", e)


def _parse_restriction(ctx, p):
    out = {}
    while True:
        ptok = p.expect_ident("a parameter name")
        entry = ctx.names.get(ptok.text)
        if entry is None or entry[0] != "param":
            p.err(ptok, f"'{ptok.text}' is not a parameter")
        if p.at_ident("in"):
            p.take()
            p.expect_op("[")
            lo = p.const()
            p.expect_op(",")
            hi = p.const()
            p.expect_op("]")
            out[entry[1]] = (lo, hi)  # 2-tuple on a scalar parameter = range
        else:
            p.expect_op("=")
            val = p.const_or_list()
            dim = ctx.model.param_record(entry[1]).dim
            if isinstance(val, tuple) and len(val) != dim:
                p.err(ptok, f"'{ptok.text}' has {dim} coordinate(s); "
                            "use 'name in [lo, hi]' for a range")
            out[entry[1]] = val
        if not p.at_op(","):
            break
        p.take()
    return out


def _handle_constraints(ctx, p):
    label = None
    if p.peek().kind == "ident" and p.peek(1).kind == "op" and p.peek(1).text == ":":
        label = p.take().text
        p.take()
    lhs = p.expr()
    rel = p.take()
    if rel.kind != "op" or rel.text not in ("<=", ">=", "=="):
        p.err(rel, "expected <=, >= or ==")
    rhs = p.expr()
    restriction = None
    if p.at_op("@"):
        p.take()
        restriction = _parse_restriction(ctx, p)
    p.expect_end()
    if isinstance(rhs, Const):
        expr, rhs_val = lhs, rhs.value
    else:
        expr, rhs_val = lhs - rhs, 0.0
    try:
        ctx.model.add_constraint(expr, rel.text, rhs_val, label=label,
                                 restriction=restriction)
    except ContoptError as e:
        p.err(rel, str(e))


def _handle_objective(ctx, p):
    if ctx.saw_objective:
        p.err(p.peek(), "objective is already set")
    sense = p.expect_ident("min or max")
    if sense.text not in ("min", "max"):
        p.err(sense, f"objective sense must be min or max, got '{sense.text}'")
    p.in_objective = True
    e = p.expr()
    p.in_objective = False
    p.expect_end()
    if sense.text == "max" and ctx.model._cvar_used:
        p.err(sense, "cvar objectives must be minimized")
    ctx.model.set_objective(sense.text, e)
    ctx.saw_objective = True


def _parse_event_tree(ctx, p):
    if p.at_op("("):
        p.take()
        op = p.expect_ident("and or or")
        if op.text not in ("and", "or"):
            p.err(op, f"expected and/or, got '{op.text}'")
        children = []
        while not p.at_op(")"):
            if p.peek().kind == "end":
                p.err(p.peek(), "unterminated event tree, expected ')'")
            children.append(_parse_event_tree(ctx, p))
        p.take()
        if not children:
            p.err(op, f"({op.text} ...) needs at least one child")
        node = And(tuple(children)) if op.text == "and" else Or(tuple(children))
        return node
    t = p.expect_ident("an atom name")
    entry = ctx.names.get(t.text)
    if entry is None or entry[0] != "atom":
        p.err(t, f"'{t.text}' is not an atom")
    return entry[1]


def _handle_events(ctx, p):
    name = p.expect_ident("a name")
    p.expect_op("=")
    form = p.expect_ident("atom or event")
    if form.text == "atom":
        lhs = p.expr()
        rel = p.take()
        if rel.kind != "op" or rel.text not in ("<=", ">"):
            p.err(rel, "atom relation must be <= or >")
        rhs = p.expr()
        p.expect_end()
        if isinstance(rhs, Const):
            atom = Atom(lhs, rel.text, rhs.value)
        else:
            atom = Atom(lhs - rhs, rel.text, 0.0)
        ctx.bind(name, "atom", atom)
        return
    if form.text != "event":
        p.err(form, f"expected atom or event, got '{form.text}'")
    tree = _parse_event_tree(ctx, p)
    opts = p.option_tail({"alpha", "direction", "bigM", "bigm", "big_m", "over"})
    p.expect_end()
    if "alpha" not in opts:
        p.err(name, f"event '{name.text}' needs alpha = ...")
    big_m = opts.get("bigM", opts.get("bigm", opts.get("big_m")))
    if big_m is None:
        p.err(name, f"event '{name.text}' needs bigM = ...")
    direction = opts.get("direction", "at-least")
    over = opts.get("over")
    if over is not None:
        entry = ctx.names.get(over.text)
        if entry is None or entry[0] != "param":
            p.err(over, f"'{over.text}' is not a parameter")
        param = entry[1]
    else:
        random = [h for h, rec in ctx.model.params.items()
                  if not isinstance(rec.domain, Interval)]
        if len(random) == 1:
            param = random[0]
        elif len(ctx.model.params) == 1:
            param = next(iter(ctx.model.params))
        else:
            p.err(name, f"event '{name.text}' needs over = <parameter> "
                        "(the model has several)")
    try:
        ref = reformulate_event(ctx.model, tree, param, opts["alpha"],
                                direction=direction, big_m=big_m, label=name.text)
    except ContoptError as e:
        p.err(name, str(e))
    binding = EventBinding(name.text, tree, ctx.model._h(param), opts["alpha"],
                           direction, big_m, ref)
    ctx.bind(name, "event", binding)
    ctx.events[name.text] = binding


def _handle_options(ctx, p):
    key = p.expect_ident("an option name")
    if key.text not in KNOWN_OPTIONS and key.text not in ctx.used_placeholders:
        p.err(key, f"unknown option '{key.text}'")
    p.expect_op("=")
    val = p.const()
    p.expect_end()
    if key.text in ctx.used_placeholders:
        ctx.option_defaults[key.text] = val
    if key.text in KNOWN_OPTIONS:
        ctx.options[key.text] = val


_HANDLERS = {
    "params": _handle_params,
    "functions": _handle_functions,
    "vars": _handle_vars,
    "defs": _handle_defs,
    "constraints": _handle_constraints,
    "objective": _handle_objective,
    "events": _handle_events,
    "options": _handle_options,
}


# -- driver ---------------------------------------------------------------

def _split_sections(text, diags):
    """Strip comments, find section headers, keep line numbers."""
    out = []
    section = None
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            col = line.index("[") + 1
            if not stripped.endswith("]"):
                diags.append(Diag(line_no, col, "unterminated section header"))
                section = None
                continue
            name = stripped[1:-1].strip()
            if name not in SECTIONS:
                diags.append(Diag(line_no, col,
                                  f"unknown section '[{name}]' "
                                  f"(one of {', '.join(SECTIONS)})"))
                section = None
                continue
            section = name
            continue
        if section is None:
            diags.append(Diag(line_no, 1,
                              "content before any [section] header"))
            continue
        out.append((section, line_no, line))
    return out


def parse_model(text, placeholders=None, num_supports=None, seed=None):
    """Parse model-file text into a validated Model.

    placeholders maps $name tokens to values; num_supports overrides
    declared support counts per parameter name; seed overrides every
    sampled parameter's seed. Returns the Model, or a list of Diag
    records if anything is wrong. A returned model additionally carries
    file_events, file_options and file_warnings attributes.
    """
    diags = []
    ctx = _Ctx(dict(placeholders or {}), dict(num_supports or {}), seed)
    ctx.model._cvar_used = False
    ctx.used_placeholders = set(re.findall(r"\$([A-Za-z_]\w*)", text))

    lines = _split_sections(text, diags)
    # options first so placeholder defaults exist wherever $names appear
    ordered = ([t for t in lines if t[0] == "options"]
               + [t for t in lines if t[0] != "options"])
    tried_objective = False
    for section, line_no, line in ordered:
        tried_objective = tried_objective or section == "objective"
        try:
            toks = _tokenize(line_no, line)
            p = _P(ctx, toks)
            if section == "objective":
                _track_cvar(ctx, p)
            _HANDLERS[section](ctx, p)
        except _LineError as e:
            diags.append(Diag(e.line, e.col, e.message))
        except ContoptError as e:
            diags.append(Diag(line_no, 1, str(e)))

    if not tried_objective:
        diags.append(Diag(0, 0, "missing objective"))
    if diags:
        return diags

    warnings = []
    for d in ctx.model.validate():
        if d.severity == "error":
            diags.append(Diag(0, 0, f"model: {d.message}"))
        else:
            warnings.append(d.message)
    if diags:
        return diags

    ctx.model.file_events = ctx.events
    ctx.model.file_options = ctx.options
    ctx.model.file_warnings = warnings
    return ctx.model


def _track_cvar(ctx, p):
    # remember whether this objective line calls cvar, for the max check
    ctx.model._cvar_used = any(t.kind == "ident" and t.text == "cvar"
                               for t in p.toks)


def is_diagnostics(result):
    return isinstance(result, list)

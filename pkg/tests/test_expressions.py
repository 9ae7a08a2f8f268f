"""Expression tree: building, evaluation, reverse-mode gradients, rewriting."""

import math

import numpy as np
import pytest

import contopt
from contopt import expressions as ex
from contopt.errors import DomainError, NonDifferentiable, UnboundReference


@pytest.fixture
def m():
    return contopt.Model()


def test_sum_flattening(m):
    a = m.add_variable("a")
    b = m.add_variable("b")
    c = m.add_variable("c")
    s = a + b + c
    assert isinstance(s, ex.SumExpr)
    assert len(s.terms) == 3


def test_fsum_accuracy(m):
    a = m.add_variable("a")
    b = m.add_variable("b")
    c = m.add_variable("c")
    val = ex.evaluate(m, a + b + c, {a: 1e16, b: 1.0, c: -1e16})
    assert val == 1.0


def test_operator_nodes(m):
    x = m.add_variable("x")
    assert isinstance(x * 2.0, ex.Binary)
    assert isinstance(-x, ex.Unary)
    assert isinstance(x ** 2, ex.Binary)
    with pytest.raises(TypeError):
        x ** x  # exponent must be a constant


def test_pow_zero_and_one(m):
    x = m.add_variable("x")
    assert ex.evaluate(m, x ** 0, {x: 3.0}) == 1.0
    assert ex.evaluate(m, x ** 1, {x: 3.0}) == 3.0


class TestEvaluate:
    def test_infection_term(self, m):
        # f = beta * s * i at beta=0.727, s=0.8, i=0.01
        s = m.add_variable("s")
        i = m.add_variable("i")
        f = 0.727 * s * i
        assert ex.evaluate(m, f, {s: 0.8, i: 0.01}) == pytest.approx(0.005816, abs=1e-15)

    def test_domain_errors(self, m):
        x = m.add_variable("x")
        with pytest.raises(DomainError):
            ex.evaluate(m, ex.log(x), {x: -1.0})
        with pytest.raises(DomainError):
            ex.evaluate(m, ex.sqrt(x), {x: -4.0})
        with pytest.raises(DomainError):
            ex.evaluate(m, x / (x - x), {x: 1.0})

    def test_measure_has_no_pointwise_value(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        y = m.add_variable("y", deps=(t,))
        mu = contopt.integral(m, y, t)
        with pytest.raises(UnboundReference):
            ex.evaluate(m, mu + 1.0, {})

    def test_param_function(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        w = m.add_function("w", (t,), lambda tv: 2.0 * tv)
        assert ex.evaluate(m, w * 3.0, {t: 0.25}) == pytest.approx(1.5)


class TestGrad:
    def test_infection_term_closed_form(self, m):
        s = m.add_variable("s")
        i = m.add_variable("i")
        f = 0.727 * s * i
        gs, gi = ex.grad(m, f, [s, i], {s: 0.8, i: 0.01})
        # d/ds = beta*i, d/di = beta*s, worked out by hand
        assert gs == pytest.approx(0.00727, abs=1e-15)
        assert gi == pytest.approx(0.5816, abs=1e-15)

    def test_gaussian_bump(self, m):
        x = m.add_variable("x")
        g = ex.exp(-(x ** 2) / 2.0)
        (gx,) = ex.grad(m, g, [x], {x: 1.2})
        assert gx == pytest.approx(-1.2 * math.exp(-0.72), rel=1e-14)

    def test_mixed_chain(self, m):
        x = m.add_variable("x")
        y = m.add_variable("y")
        h = ex.log(x) / ex.sqrt(y) + (x / y) ** 3
        xv, yv = 1.7, 2.3
        gx, gy = ex.grad(m, h, [x, y], {x: xv, y: yv})
        assert gx == pytest.approx(1 / (xv * math.sqrt(yv)) + 3 * xv ** 2 / yv ** 3,
                                   rel=1e-12)
        assert gy == pytest.approx(-math.log(xv) / (2 * yv ** 1.5)
                                   - 3 * xv ** 3 / yv ** 4, rel=1e-12)

    def test_finite_difference_property(self, m):
        x = m.add_variable("x")
        y = m.add_variable("y")
        cases = [
            x * y + y ** 2,
            ex.exp(x * 0.3) * y,
            ex.log(x + 3.0) + ex.sqrt(y + 2.0),
            (x + y) ** 3 / (y + 4.0),
        ]
        rng = np.random.default_rng(2024)
        for expr in cases:
            for _ in range(10):
                xv, yv = rng.uniform(0.5, 2.0, 2)
                gx, gy = ex.grad(m, expr, [x, y], {x: xv, y: yv})
                h = 1e-6
                fdx = (ex.evaluate(m, expr, {x: xv + h, y: yv})
                       - ex.evaluate(m, expr, {x: xv - h, y: yv})) / (2 * h)
                fdy = (ex.evaluate(m, expr, {x: xv, y: yv + h})
                       - ex.evaluate(m, expr, {x: xv, y: yv - h})) / (2 * h)
                assert gx == pytest.approx(fdx, rel=2e-6, abs=2e-6)
                assert gy == pytest.approx(fdy, rel=2e-6, abs=2e-6)

    def test_abs_kink(self, m):
        x = m.add_variable("x")
        (g,) = ex.grad(m, ex.abs_(x), [x], {x: -2.0})
        assert g == -1.0
        with pytest.raises(NonDifferentiable):
            ex.grad(m, ex.abs_(x), [x], {x: 0.0})

    def test_sqrt_at_zero(self, m):
        x = m.add_variable("x")
        with pytest.raises(DomainError):
            ex.grad(m, ex.sqrt(x), [x], {x: 0.0})

    def test_pow_base_zero(self, m):
        x = m.add_variable("x")
        # x**2 is fine at 0, x**0.5 is not
        (g,) = ex.grad(m, x ** 2, [x], {x: 0.0})
        assert g == 0.0
        with pytest.raises(DomainError):
            ex.grad(m, x ** 0.5, [x], {x: 0.0})

    def test_alignment_and_missing(self, m):
        x = m.add_variable("x")
        y = m.add_variable("y")
        z = m.add_variable("z")
        g = ex.grad(m, x * 2.0 + y, [z, y, x], {x: 1.0, y: 1.0, z: 5.0})
        assert g == [0.0, 1.0, 2.0]


class TestParameterDeps:
    def test_measure_consumes_parameter(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        xi = m.random_parameter("xi", contopt.Normal(0.0, 1.0))
        y = m.add_variable("y", deps=(t, xi))
        inner = contopt.expectation(m, y, xi)
        deps = ex.parameter_deps(m, inner)
        assert deps == frozenset({t.handle})
        outer = contopt.integral(m, inner, t)
        assert ex.parameter_deps(m, outer) == frozenset()

    def test_weight_function_counts(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        s = m.interval_parameter("s", 0.0, 1.0)
        w = m.add_function("w", (s,), lambda sv: sv)
        expr = w * 1.0
        assert ex.parameter_deps(m, expr) == frozenset({s.handle})

    def test_restricted_variable_drops_fixed(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        xi = m.random_parameter("xi", contopt.Normal(0.0, 1.0))
        y = m.add_variable("y", deps=(t, xi))
        y0 = m.restrict(y, {t: 0.0})
        assert ex.parameter_deps(m, y0) == frozenset({xi.handle})


class TestRestrict:
    def test_bitwise_equivalence(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        x = m.add_variable("x")
        expr = ex.exp(t[0] * 0.7) * x + t[0] ** 2 / 3.0
        fixed = ex.restrict(m, expr, t, 0.3)
        for xv in (0.1, 1.7, -2.4):
            a = ex.evaluate(m, fixed, {x: xv})
            b = ex.evaluate(m, expr, {x: xv, t: 0.3})
            assert a == b  # identical float operations, identical bits

    def test_untouched_subtree_shared(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        x = m.add_variable("x")
        sub = ex.exp(x * 2.0)
        expr = sub + t[0]
        out = ex.restrict(m, expr, t, 0.5)
        assert out.terms[0] is sub

    def test_restrict_infinite_variable(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        y = m.add_variable("y", deps=(t,))
        out = ex.restrict(m, y + 1.0, t, 0.0)
        var_node = out.terms[0]
        assert isinstance(var_node, ex.VarRef)
        rec = m.var_record(var_node.var)
        assert rec.kind == "point"
        assert rec.parent == y.handle

    def test_restrict_binds_function(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        w = m.add_function("w", (t,), lambda tv: tv * 10.0)
        out = ex.restrict(m, w * 1.0, t, 0.2)
        assert ex.evaluate(m, out, {}) == pytest.approx(2.0)

    def test_restrict_unrelated_param_error(self, m):
        t = m.interval_parameter("t", 0.0, 1.0)
        x = m.add_variable("x")
        with pytest.raises(contopt.errors.UnknownParameter):
            ex.restrict(m, x * 1.0, 999, 0.3)

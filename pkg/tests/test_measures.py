"""Measure approximation, risk expansion, and event reformulation tests.

Frozen values: discrete CVaR of {1,2,3,4} with equal weights is
min_z z + (1/(1-a)) mean(max(x-z,0)); worked by hand at the optimal z
(the a-quantile) this gives 2.5, 3.0, 3.5, 4.0 for a = 0, .25, .5, .75.
"""

import numpy as np
import pytest

import contopt
from contopt import And, Atom, Or, cvar, expectation, integral, quantile
from contopt.errors import (
    AlphaOutOfRange,
    BadBigM,
    BadWeights,
    EmptySupports,
    MissingDependency,
    UnsupportedLogic,
    UnsupportedScheme,
)
from contopt.measures import (
    approximate,
    excursion_time,
    measure_coefficients,
    reformulate_event,
    trapezoid_coeffs,
)


class TestTrapezoid:
    def test_even_grid(self):
        beta = trapezoid_coeffs([0.0, 0.5, 1.0])
        assert np.allclose(beta, [0.25, 0.5, 0.25], atol=0.0)

    def test_uneven_grid(self):
        # intervals 0.1 and 0.9: end weights are half the adjacent gap
        beta = trapezoid_coeffs([0.0, 0.1, 1.0])
        assert np.allclose(beta, [0.05, 0.5, 0.45], atol=1e-15)

    def test_integrates_linear_exactly(self):
        rng = np.random.default_rng(7)
        pts = np.sort(rng.uniform(0.0, 2.0, 17))
        pts[0], pts[-1] = 0.0, 2.0
        beta = trapezoid_coeffs(pts)
        # integral of 3x + 1 over [0, 2] = 8
        assert abs(beta @ (3 * pts + 1) - 8.0) < 1e-12

    def test_too_few(self):
        with pytest.raises(EmptySupports):
            trapezoid_coeffs([0.5])


class TestCoefficients:
    def test_interval_default_trapezoid(self):
        m = contopt.Model()
        t = m.interval_parameter("t", 0.0, 1.0)
        m.generate_supports(t, "uniform-grid", 5)
        mref = integral(m, t, t)
        beta = measure_coefficients(m, mref, m.param_record(t).supports.points)
        assert np.allclose(beta, [0.125, 0.25, 0.25, 0.25, 0.125])

    def test_gauss_weights_used_when_matching(self):
        m = contopt.Model()
        t = m.interval_parameter("t", -1.0, 1.0)
        m.generate_supports(t, "gauss-legendre", 4)
        mref = integral(m, t * t * t * t, t)
        pts = m.param_record(t).supports.points
        beta = measure_coefficients(m, mref, pts)
        # degree-4 monomial integrated exactly only by the stored rule
        x = pts[:, 0]
        assert abs(beta @ x**4 - 0.4) < 1e-13
        # a grid of a different size falls back to trapezoid
        beta2 = measure_coefficients(m, mref, np.linspace(-1, 1, 9))
        assert np.allclose(beta2, trapezoid_coeffs(np.linspace(-1, 1, 9)))

    def test_expectation_scales_by_length(self):
        m = contopt.Model()
        t = m.interval_parameter("t", 2.0, 6.0)
        m.generate_supports(t, "uniform-grid", 9)
        mref = expectation(m, t, t)
        beta = measure_coefficients(m, mref, m.param_record(t).supports.points)
        assert abs(beta.sum() - 1.0) < 1e-12

    def test_random_parameter_counting(self):
        m = contopt.Model()
        xi = m.random_parameter("xi", contopt.Normal(0.0, 1.0))
        m.generate_supports(xi, "mc-sample", 8, seed=3)
        mref = expectation(m, xi, xi)
        beta = measure_coefficients(m, mref, m.param_record(xi).supports.points)
        assert np.allclose(beta, np.full(8, 0.125))

    def test_integral_over_random_rejected(self):
        m = contopt.Model()
        xi = m.random_parameter("xi", contopt.Normal(0.0, 1.0))
        with pytest.raises(UnsupportedScheme):
            integral(m, xi, xi)

    def test_event_prob_always_counting(self):
        m = contopt.Model()
        t = m.interval_parameter("t", 0.0, 1.0)
        m.generate_supports(t, "uniform-grid", 4)
        mref = excursion_time(m, t, t, 0.5)
        beta = measure_coefficients(m, mref, m.param_record(t).supports.points)
        assert np.allclose(beta, np.full(4, 0.25))

    def test_approximate_bundles_points(self):
        m = contopt.Model()
        t = m.interval_parameter("t", 0.0, 1.0)
        m.generate_supports(t, "uniform-grid", 3)
        ap = approximate(m, integral(m, t, t))
        assert ap.points.shape == (3, 1)
        assert np.allclose(ap.coeffs, [0.25, 0.5, 0.25])


class TestQuantile:
    def test_median_even_count(self):
        # cumulative hits 0.5 exactly at the second of four values
        assert quantile([1.0, 2.0, 3.0, 4.0], alpha=0.5) == 2.0

    def test_order_invariant(self):
        assert quantile([4.0, 1.0, 3.0, 2.0], alpha=0.5) == 2.0

    def test_extremes(self):
        v = [5.0, 1.0, 3.0]
        assert quantile(v, alpha=0.0) == 1.0
        assert quantile(v, alpha=1.0) == 5.0

    def test_weighted(self):
        v = [10.0, 20.0, 30.0]
        w = [0.6, 0.3, 0.1]
        assert quantile(v, w, alpha=0.5) == 10.0
        assert quantile(v, w, alpha=0.7) == 20.0
        assert quantile(v, w, alpha=0.95) == 30.0

    def test_errors(self):
        with pytest.raises(EmptySupports):
            quantile([])
        with pytest.raises(AlphaOutOfRange):
            quantile([1.0], alpha=1.5)
        with pytest.raises(BadWeights):
            quantile([1.0, 2.0], weights=[1.0], alpha=0.5)
        with pytest.raises(BadWeights):
            quantile([1.0, 2.0], weights=[0.5, 0.6], alpha=0.5)
        with pytest.raises(BadWeights):
            quantile([1.0, 2.0], weights=[-0.2, 1.2], alpha=0.5)


def _cvar_lp(alpha):
    m = contopt.Model()
    xi = m.random_parameter("xi", contopt.Uniform(0.0, 5.0))
    m.set_supports(xi, [1.0, 2.0, 3.0, 4.0])
    exp = cvar(m, xi, xi, alpha)
    m.set_objective("min", exp.objective)
    prog, tmap = contopt.transcribe(m)
    sol = contopt.finprog.solve(prog)
    assert sol.status == "optimal"
    return tmap.objective_value(sol)


class TestCvar:
    def test_structure(self):
        m = contopt.Model()
        xi = m.random_parameter("xi", contopt.Uniform(0.0, 5.0))
        exp = cvar(m, xi, xi, 0.5)
        zr = m.var_record(exp.z)
        er = m.var_record(exp.excess)
        assert zr.kind == "finite" and zr.lb == -np.inf
        assert er.kind == "infinite" and er.lb == 0.0 and er.deps == (xi.handle,)
        assert m.constraints[exp.constraint].relation == ">="

    def test_discrete_values(self):
        for alpha, want in [(0.0, 2.5), (0.25, 3.0), (0.5, 3.5), (0.75, 4.0)]:
            assert abs(_cvar_lp(alpha) - want) < 1e-9

    def test_alpha_one_rejected(self):
        m = contopt.Model()
        xi = m.random_parameter("xi", contopt.Uniform(0.0, 1.0))
        with pytest.raises(AlphaOutOfRange):
            cvar(m, xi, xi, 1.0)

    def test_needs_dependency(self):
        m = contopt.Model()
        xi = m.random_parameter("xi", contopt.Uniform(0.0, 1.0))
        x = m.add_variable("x")
        with pytest.raises(MissingDependency):
            cvar(m, x, xi, 0.5)


def _event_model():
    m = contopt.Model()
    xi = m.random_parameter("xi", contopt.Normal(0.0, 1.0))
    m.generate_supports(xi, "mc-sample", 6, seed=11)
    x = m.add_variable("x", lb=0.0, ub=10.0)
    return m, xi, x


class TestEventReformulation:
    def test_joint_and_shares_one_binary(self):
        m, xi, x = _event_model()
        tree = And((Atom(x * xi, "<=", 2.0), Atom(x + xi, "<=", 5.0)))
        ref = reformulate_event(m, tree, xi, 0.8, big_m=100.0)
        assert len(ref.binaries) == 1
        assert len(ref.bigm_constraints) == 2
        assert m.constraints[ref.prob_constraint].relation == ">="
        assert m.constraints[ref.prob_constraint].rhs == 0.8
        assert m.var_record(ref.indicator).integrality == "binary"
        assert m.var_record(ref.indicator).deps == (xi.handle,)

    def test_or_binary_per_child(self):
        m, xi, x = _event_model()
        tree = Or((Atom(x * xi, "<=", 2.0), Atom(x + xi, "<=", 1.0)))
        n_before = len(m.constraints)
        ref = reformulate_event(m, tree, xi, 0.9, big_m=50.0)
        assert len(ref.binaries) == 3  # indicator + one per alternative
        assert len(ref.bigm_constraints) == 2
        # big-M rows, the disjunction link, and the probability row
        assert len(m.constraints) - n_before == 4

    def test_at_most_or_shares_binary(self):
        m, xi, x = _event_model()
        tree = Or((Atom(x * xi, ">", 2.0), Atom(x + xi, ">", 4.0)))
        ref = reformulate_event(m, tree, xi, 0.2, direction="at-most", big_m=30.0)
        assert len(ref.binaries) == 1
        assert len(ref.bigm_constraints) == 2
        assert m.constraints[ref.prob_constraint].relation == "<="

    def test_at_most_and_splits(self):
        m, xi, x = _event_model()
        tree = And((Atom(x * xi, ">", 2.0), Atom(x + xi, ">", 4.0)))
        ref = reformulate_event(m, tree, xi, 0.2, direction="at-most", big_m=30.0)
        assert len(ref.binaries) == 3

    def test_mixed_depth_two(self):
        m, xi, x = _event_model()
        tree = And((Or((Atom(x * xi, "<=", 1.0), Atom(x * xi, "<=", 2.0))),
                    Atom(x + xi, "<=", 9.0)))
        ref = reformulate_event(m, tree, xi, 0.5, big_m=40.0)
        # top + or-node + two or-children
        assert len(ref.binaries) == 4

    def test_depth_cap(self):
        m, xi, x = _event_model()
        a = Atom(x * xi, "<=", 1.0)
        deep = And((Or((And((a, a)), a)), a))
        with pytest.raises(UnsupportedLogic):
            reformulate_event(m, deep, xi, 0.5, big_m=10.0)

    def test_bad_inputs(self):
        m, xi, x = _event_model()
        a = Atom(x * xi, "<=", 1.0)
        with pytest.raises(BadBigM):
            reformulate_event(m, a, xi, 0.5)
        with pytest.raises(BadBigM):
            reformulate_event(m, a, xi, 0.5, big_m=-3.0)
        with pytest.raises(AlphaOutOfRange):
            reformulate_event(m, a, xi, 1.2, big_m=10.0)
        with pytest.raises(UnsupportedLogic):
            reformulate_event(m, a, xi, 0.5, big_m=10.0, direction="sideways")
        with pytest.raises(UnsupportedLogic):
            reformulate_event(m, Atom(x * xi, ">", 1.0), xi, 0.5, big_m=10.0)
        with pytest.raises(UnsupportedLogic):
            reformulate_event(m, Atom(x * xi, "<", 1.0), xi, 0.5, big_m=10.0)
        with pytest.raises(MissingDependency):
            reformulate_event(m, Atom(x, "<=", 1.0), xi, 0.5, big_m=10.0)


def test_excursion_needs_dependency():
    m = contopt.Model()
    t = m.interval_parameter("t", 0.0, 1.0)
    x = m.add_variable("x")
    with pytest.raises(MissingDependency):
        excursion_time(m, x, t, 0.5)

"""Domains, support generation, and sampling streams."""

import math

import numpy as np
import pytest

from contopt import domains
from contopt.errors import (
    DegenerateDomain,
    EmptySupports,
    MissingSeed,
    NonFinite,
    OutOfDomain,
    UnsupportedScheme,
)


def legendre_value(n, x):
    # three-term recurrence, independent of numpy.polynomial
    p0, p1 = 1.0, x
    if n == 0:
        return p0
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    return p1


def legendre_roots_bisect(n):
    """Roots of P_n by sign-change bisection. Oracle for the node provider."""
    grid = np.linspace(-1.0, 1.0, 2000)
    vals = [legendre_value(n, x) for x in grid]
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb < 0:
            lo, hi, flo = a, b, fa
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                fm = legendre_value(n, mid)
                if flo * fm <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append(0.5 * (lo + hi))
    return np.array(roots)


class TestDomainValidation:
    def test_interval_needs_order(self):
        with pytest.raises(DegenerateDomain):
            domains.Interval(2.0, 2.0)
        with pytest.raises(DegenerateDomain):
            domains.Interval(3.0, 1.0)

    def test_interval_needs_finite(self):
        with pytest.raises(NonFinite):
            domains.Interval(0.0, math.inf)

    def test_normal_variance_positive(self):
        with pytest.raises(DegenerateDomain):
            domains.Normal(0.0, 0.0)
        with pytest.raises(DegenerateDomain):
            domains.Normal(0.0, -1.0)

    def test_mvnormal_needs_symmetric_pd(self):
        with pytest.raises(DegenerateDomain):
            domains.MvNormal((0.0, 0.0), ((1.0, 0.5), (0.4, 1.0)))
        with pytest.raises(DegenerateDomain):
            domains.MvNormal((0.0, 0.0), ((1.0, 2.0), (2.0, 1.0)))
        d = domains.MvNormal((1.0, 2.0), ((2.0, 0.0), (0.0, 3.0)))
        assert d.dim == 2

    def test_contains(self):
        iv = domains.Interval(0.0, 1.0)
        assert iv.contains((0.5,))
        assert iv.contains((1.0 + 1e-13,))
        assert not iv.contains((1.1,))


class TestGrids:
    def test_uniform_grid_values(self):
        ss = domains.generate_supports(domains.Interval(0.0, 2.0), "uniform-grid", 5)
        assert np.allclose(ss.values_1d(), [0.0, 0.5, 1.0, 1.5, 2.0])
        assert ss.scheme == "uniform-grid"
        assert ss.weights is None

    def test_uniform_grid_minimum(self):
        with pytest.raises(EmptySupports):
            domains.generate_supports(domains.Interval(0.0, 1.0), "uniform-grid", 1)

    def test_gauss_nodes_match_bisection(self):
        for n in (2, 3, 5, 8):
            x, _ = domains.gauss_legendre(n)
            assert np.allclose(np.sort(x), legendre_roots_bisect(n), atol=1e-10)

    def test_gauss_weights_sum_to_length(self):
        _, w = domains.gauss_legendre(7, 2.0, 5.0)
        assert w.sum() == pytest.approx(3.0, abs=1e-12)

    def test_gauss_polynomial_exactness(self):
        # n nodes integrate x^(2n-1) exactly
        n = 4
        x, w = domains.gauss_legendre(n, 0.0, 1.0)
        for k in range(2 * n):
            assert np.sum(w * x ** k) == pytest.approx(1.0 / (k + 1), rel=1e-12)

    def test_lobatto_known_nodes(self):
        assert np.allclose(domains.gauss_lobatto(2), [-1.0, 1.0])
        n4 = domains.gauss_lobatto(4)
        assert np.allclose(n4, [-1.0, -math.sqrt(1 / 5), math.sqrt(1 / 5), 1.0])
        n5 = domains.gauss_lobatto(5)
        assert np.allclose(n5, [-1.0, -math.sqrt(3 / 7), 0.0, math.sqrt(3 / 7), 1.0])

    def test_interval_rejects_mc(self):
        with pytest.raises(UnsupportedScheme):
            domains.generate_supports(domains.Interval(0.0, 1.0), "mc-sample", 5, seed=1)


class TestSampling:
    def test_seed_required(self):
        with pytest.raises(MissingSeed):
            domains.generate_supports(domains.Uniform(0.0, 1.0), "mc-sample", 5)

    def test_distribution_rejects_grid(self):
        with pytest.raises(UnsupportedScheme):
            domains.generate_supports(domains.Uniform(0.0, 1.0), "uniform-grid", 5)

    def test_reproducible_bitwise(self):
        d = domains.Normal(1.0, 4.0)
        a = domains.generate_supports(d, "mc-sample", 50, seed=7, label="xi")
        b = domains.generate_supports(d, "mc-sample", 50, seed=7, label="xi")
        assert np.array_equal(a.points, b.points)

    def test_label_gives_independent_streams(self):
        d = domains.Uniform(0.0, 1.0)
        a = domains.generate_supports(d, "mc-sample", 50, seed=7, label="a")
        b = domains.generate_supports(d, "mc-sample", 50, seed=7, label="b")
        assert not np.array_equal(a.points, b.points)

    def test_declaration_order_irrelevant(self):
        # the draw for a label depends on (seed, label) only
        d = domains.Uniform(0.0, 1.0)
        first = domains.generate_supports(d, "mc-sample", 10, seed=3, label="x")
        domains.generate_supports(d, "mc-sample", 99, seed=3, label="other")
        again = domains.generate_supports(d, "mc-sample", 10, seed=3, label="x")
        assert np.array_equal(first.points, again.points)

    def test_uniform_within_bounds(self):
        d = domains.Uniform(-2.0, 3.0)
        ss = domains.generate_supports(d, "mc-sample", 500, seed=11, label="u")
        assert ss.points.min() >= -2.0 and ss.points.max() <= 3.0

    def test_normal_moments(self):
        d = domains.Normal(5.0, 9.0)
        ss = domains.generate_supports(d, "mc-sample", 20000, seed=101, label="n")
        assert ss.points.mean() == pytest.approx(5.0, abs=0.1)
        assert ss.points.std() == pytest.approx(3.0, abs=0.1)

    def test_mvnormal_cholesky_structure(self):
        cov = ((2.0, 0.6), (0.6, 1.0))
        d = domains.MvNormal((3.0, 5.0), cov)
        ss = domains.generate_supports(d, "mc-sample", 40000, seed=5, label="xi")
        assert ss.points.shape == (40000, 2)
        emp = np.cov(ss.points.T)
        assert np.allclose(emp, cov, atol=0.05)
        assert np.allclose(ss.points.mean(axis=0), [3.0, 5.0], atol=0.05)

    def test_stream_is_pcg64_with_label_key(self):
        # reconstruct the stream from its documented construction
        key = domains.stream_key("xi")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([42, key])))
        expect = rng.uniform(0.0, 1.0, 5)
        got = domains.generate_supports(domains.Uniform(0.0, 1.0), "mc-sample", 5,
                                        seed=42, label="xi").values_1d()
        assert np.array_equal(got, expect)


class TestExplicitSupports:
    def test_sorted_dedup(self):
        ss = domains.supports_from_values(domains.Interval(0.0, 1.0),
                                          [0.5, 0.1, 0.5, 0.9])
        assert np.allclose(ss.values_1d(), [0.1, 0.5, 0.9])

    def test_out_of_domain(self):
        with pytest.raises(OutOfDomain):
            domains.supports_from_values(domains.Interval(0.0, 1.0), [0.5, 1.5])

    def test_empty(self):
        with pytest.raises(EmptySupports):
            domains.supports_from_values(domains.Interval(0.0, 1.0), [])

    def test_distribution_keeps_order(self):
        ss = domains.supports_from_values(domains.Uniform(0.0, 1.0), [0.9, 0.2, 0.5])
        assert np.allclose(ss.values_1d(), [0.9, 0.2, 0.5])

    def test_multidim_points(self):
        d = domains.MvNormal((0.0, 0.0), ((1.0, 0.0), (0.0, 1.0)))
        ss = domains.supports_from_values(d, [(1.0, 2.0), (3.0, 4.0)])
        assert ss.points.shape == (2, 2)
        with pytest.raises(OutOfDomain):
            domains.supports_from_values(d, [1.0, 2.0, 3.0])

    def test_merge_drops_weights(self):
        iv = domains.Interval(0.0, 1.0)
        gl = domains.generate_supports(iv, "gauss-legendre", 4)
        assert gl.weights is not None
        merged = domains.add_supports(gl, iv, [0.5])
        assert merged.weights is None
        assert merged.scheme == "mixed"
        assert len(merged) == 5

    def test_merge_dedups_close_values(self):
        iv = domains.Interval(0.0, 1.0)
        a = domains.supports_from_values(iv, [0.1, 0.2])
        merged = domains.add_supports(a, iv, [0.2 + 1e-15, 0.3])
        assert np.allclose(merged.values_1d(), [0.1, 0.2, 0.3])


class TestProductOrder:
    def test_last_set_fastest(self):
        a = domains.SupportSet(points=np.array([[1.0], [2.0]]), scheme="user")
        b = domains.SupportSet(points=np.array([[10.0], [20.0], [30.0]]), scheme="user")
        combos = list(domains.product_supports([a, b]))
        assert combos[0] == ((1.0,), (10.0,))
        assert combos[1] == ((1.0,), (20.0,))
        assert combos[3] == ((2.0,), (10.0,))
        assert len(combos) == 6

    def test_empty_product_is_single_combo(self):
        assert list(domains.product_supports([])) == [()]

    def test_empty_set_raises(self):
        with pytest.raises(EmptySupports):
            list(domains.product_supports([None]))

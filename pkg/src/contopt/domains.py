"""Continuous domains, infinite parameters, and finite support sets.

A domain is either a closed interval (time, space) or a probability
distribution (random quantities). A parameter ranges over one domain and
carries the finite support points that transcription later instances
against. Monte Carlo draws come from per-parameter streams keyed by the
parameter label, so adding or reordering parameters never perturbs the
samples of another one.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from .errors import (
    DegenerateDomain,
    EmptySupports,
    MissingSeed,
    NonFinite,
    OutOfDomain,
    UnsupportedScheme,
)

#: absolute tolerance used when deduplicating support values
DEDUP_DECIMALS = 12


def _check_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise NonFinite(f"{name} must be finite, got {v}")


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] with lo < hi."""

    lo: float
    hi: float

    def __post_init__(self):
        _check_finite("interval bound", self.lo, self.hi)
        if self.lo >= self.hi:
            raise DegenerateDomain(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def dim(self):
        return 1

    @property
    def is_distribution(self):
        return False

    def contains(self, value):
        return self.lo - 1e-12 <= value[0] <= self.hi + 1e-12


@dataclass(frozen=True)
class Uniform:
    """Uniform distribution on [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        _check_finite("uniform bound", self.lo, self.hi)
        if self.lo >= self.hi:
            raise DegenerateDomain(f"uniform needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def dim(self):
        return 1

    @property
    def is_distribution(self):
        return True

    def contains(self, value):
        return self.lo - 1e-12 <= value[0] <= self.hi + 1e-12


@dataclass(frozen=True)
class Normal:
    """Scalar normal distribution with mean and variance."""

    mean: float
    var: float

    def __post_init__(self):
        _check_finite("normal parameter", self.mean, self.var)
        if self.var <= 0:
            raise DegenerateDomain(f"normal variance must be positive, got {self.var}")

    @property
    def dim(self):
        return 1

    @property
    def is_distribution(self):
        return True

    def contains(self, value):
        return math.isfinite(value[0])


@dataclass(frozen=True)
class MvNormal:
    """Multivariate normal; cov must be symmetric positive definite."""

    mean: tuple
    cov: tuple  # tuple of row tuples

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise NonFinite("mvnormal mean/cov must be finite")
        if cov.shape != (mean.size, mean.size):
            raise DegenerateDomain(f"cov shape {cov.shape} does not match mean size {mean.size}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise DegenerateDomain("cov must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DegenerateDomain("cov must be positive definite") from None
        object.__setattr__(self, "mean", tuple(float(v) for v in mean))
        object.__setattr__(self, "cov", tuple(tuple(float(v) for v in row) for row in cov))
        object.__setattr__(self, "_chol", tuple(tuple(float(v) for v in row) for row in chol))

    @property
    def dim(self):
        return len(self.mean)

    @property
    def is_distribution(self):
        return True

    def contains(self, value):
        return all(math.isfinite(v) for v in value)


@dataclass
class SupportSet:
    """Finite collection of points in one parameter's domain.

    points has shape (n, dim). weights is only set for quadrature schemes
    that carry their own coefficients (gauss-legendre); merging extra
    points drops them.
    """

    points: np.ndarray
    scheme: str  # "uniform-grid" | "gauss-legendre" | "mc-sample" | "user" | "mixed"
    weights: np.ndarray | None = None

    def __len__(self):
        return self.points.shape[0]

    def values_1d(self):
        if self.points.shape[1] != 1:
            raise OutOfDomain("support set is not one-dimensional")
        return self.points[:, 0]


@dataclass
class Parameter:
    """An infinite parameter: a label, a domain, and optional supports."""

    handle: int
    label: str
    domain: object
    supports: SupportSet | None = None
    deriv_scheme: tuple = ("fd", "backward")  # or ("ocfe", n_nodes)

    @property
    def dim(self):
        return self.domain.dim


def make_interval(lo, hi):
    """Build an interval domain, rejecting degenerate or non-finite bounds."""
    return Interval(float(lo), float(hi))


def stream_key(label):
    """Stable 64-bit stream key derived from a parameter label."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(seed, label):
    """Generator for one parameter's sampling stream.

    PCG64 seeded with SeedSequence([seed, key(label)]): draws are bitwise
    reproducible for a given (seed, label) pair and independent of the
    order parameters were declared in.
    """
    if seed is None:
        raise MissingSeed(f"sampling for '{label}' requires a seed")
    seq = np.random.SeedSequence([int(seed), stream_key(label)])
    return np.random.Generator(np.random.PCG64(seq))


def gauss_legendre(n, lo=-1.0, hi=1.0):
    """Gauss-Legendre nodes and weights on [lo, hi].

    Nodes are the roots of the degree-n Legendre polynomial mapped
    affinely from [-1, 1]; weights are scaled by (hi - lo) / 2. Exact for
    polynomials up to degree 2n - 1.
    """
    if n < 1:
        raise EmptySupports(f"gauss-legendre needs at least 1 node, got {n}")
    x, w = legendre.leggauss(n)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return mid + half * x, half * w


def gauss_lobatto(n):
    """Gauss-Lobatto nodes on [-1, 1]: both endpoints plus the roots of P'_{n-1}."""
    if n < 2:
        raise EmptySupports(f"gauss-lobatto needs at least 2 nodes, got {n}")
    if n == 2:
        return np.array([-1.0, 1.0])
    coeffs = np.zeros(n)
    coeffs[n - 1] = 1.0
    interior = legendre.legroots(legendre.legder(coeffs))
    return np.concatenate([[-1.0], np.sort(interior), [1.0]])


def _dedup_sorted(values):
    rounded = np.round(values, DEDUP_DECIMALS)
    order = np.argsort(rounded, kind="stable")
    out = []
    last = None
    for i in order:
        v = rounded[i]
        if last is None or v != last:
            out.append(v)
            last = v
    return np.array(out)


def generate_supports(domain, scheme, n, seed=None, label=""):
    """Generate a fresh SupportSet for one domain.

    Interval domains accept "uniform-grid" and "gauss-legendre";
    distribution domains accept "mc-sample" only (a seed is required).
    """
    if domain.is_distribution:
        if scheme != "mc-sample":
            raise UnsupportedScheme(f"distribution domains only support mc-sample, got '{scheme}'")
        if n < 1:
            raise EmptySupports(f"mc-sample needs at least 1 draw, got {n}")
        rng = rng_for(seed, label)
        if isinstance(domain, Uniform):
            pts = rng.uniform(domain.lo, domain.hi, size=n)[:, None]
        elif isinstance(domain, Normal):
            pts = (domain.mean + math.sqrt(domain.var) * rng.standard_normal(n))[:, None]
        elif isinstance(domain, MvNormal):
            chol = np.array(domain._chol)
            z = rng.standard_normal((n, chol.shape[0]))
            pts = np.asarray(domain.mean) + z @ chol.T
        else:
            raise UnsupportedScheme(f"unknown distribution domain {type(domain).__name__}")
        return SupportSet(points=pts, scheme="mc-sample")

    if scheme == "uniform-grid":
        if n < 2:
            raise EmptySupports(f"uniform-grid needs at least 2 points, got {n}")
        pts = np.linspace(domain.lo, domain.hi, n)
        return SupportSet(points=_dedup_sorted(pts)[:, None], scheme="uniform-grid")
    if scheme == "gauss-legendre":
        x, w = gauss_legendre(n, domain.lo, domain.hi)
        return SupportSet(points=np.round(x, DEDUP_DECIMALS)[:, None], scheme="gauss-legendre", weights=w)
    if scheme == "mc-sample":
        raise UnsupportedScheme("mc-sample applies to distribution domains; use a Uniform domain instead")
    raise UnsupportedScheme(f"unknown scheme '{scheme}' for interval domain")


def supports_from_values(domain, values):
    """SupportSet from explicit user values."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise EmptySupports("explicit support list is empty")
    if not np.all(np.isfinite(vals)):
        raise NonFinite("support values must be finite")
    if domain.dim > 1:
        if vals.ndim != 2 or vals.shape[1] != domain.dim:
            raise OutOfDomain(
                f"expected points with {domain.dim} coordinates, got shape {vals.shape}")
        for row in vals:
            if not domain.contains(tuple(row)):
                raise OutOfDomain(f"support {tuple(row)} lies outside the domain")
        return SupportSet(points=vals.copy(), scheme="user")
    vals = vals.ravel()
    for v in vals:
        if not domain.contains((v,)):
            raise OutOfDomain(f"support {v} lies outside the domain")
    if domain.is_distribution:
        return SupportSet(points=vals[:, None], scheme="user")
    return SupportSet(points=_dedup_sorted(vals)[:, None], scheme="user")


def add_supports(existing, domain, values):
    """Merge extra values into an existing set.

    Interval sets stay sorted and deduplicated (1e-12 absolute). Stored
    quadrature weights are dropped because they no longer match the
    point list.
    """
    extra = supports_from_values(domain, values)
    if existing is None:
        return extra
    if existing.points.shape[1] != 1:
        raise UnsupportedScheme("add_supports only applies to one-dimensional parameters")
    merged = np.concatenate([existing.points[:, 0], extra.points[:, 0]])
    if domain.is_distribution:
        pts = merged[:, None]
    else:
        pts = _dedup_sorted(merged)[:, None]
    scheme = existing.scheme if existing.scheme == extra.scheme else "mixed"
    return SupportSet(points=pts, scheme=scheme)


def product_supports(support_sets):
    """Iterate joint support tuples in declaration order, last set fastest.

    Yields tuples with one entry per set; each entry is that parameter's
    point as a tuple of floats.
    """
    pools = []
    for ss in support_sets:
        if ss is None or len(ss) == 0:
            raise EmptySupports("product over an empty support set")
        pools.append([tuple(row) for row in ss.points])
    if not pools:
        yield ()
        return
    idx = [0] * len(pools)
    while True:
        yield tuple(pool[i] for pool, i in zip(pools, idx))
        k = len(pools) - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] < len(pools[k]):
                break
            idx[k] = 0
            k -= 1
        if k < 0:
            return

"""
Collocation machinery: interpolation nodes and the polynomial surrogates fitted on them.

Node sets come from Gauss quadrature of the risk factor's law (Hermite for a
normal, Golub-Welsch on moments for a truncated normal) or from Chebyshev points
on an interval. Surrogates are Lagrange polynomials evaluated in barycentric form,
optionally under an exponential tilt: g(x) = exp(-beta (x - c)) p(x), where p
interpolates V(x) exp(beta (x - c)). Bond prices exp(-B x) with B in [0, 2 beta]
then enter p with rates of at most beta, and g still matches V at every node.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd
from scipy.interpolate import BarycentricInterpolator
from scipy.linalg import eigh_tridiagonal, lapack, solve_triangular
from scipy.special import comb
from scipy.stats import norm

from src.errors import InvalidInputError, MomentMatrixError, TruncationError
from src.schemas import NODE_COLUMNS

WEIGHT_TOL = 1e-12
MIN_TRUNCATED_MASS = 1e-12


@dataclass(frozen=True)
class NodeSet:
    nodes: np.ndarray
    weights: Optional[np.ndarray] = None
    law: str = ""

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=float))
        if nodes.ndim != 1 or nodes.size == 0 or not np.all(np.isfinite(nodes)):
            raise InvalidInputError("node set must be a non-empty vector of finite values")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidInputError(f"nodes must be strictly increasing (duplicates not allowed): {nodes}")
        object.__setattr__(self, "nodes", nodes)
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=float)
            if weights.shape != nodes.shape or np.any(weights <= 0):
                raise InvalidInputError("quadrature weights must be positive, one per node")
            if abs(weights.sum() - 1.0) > WEIGHT_TOL:
                raise InvalidInputError(f"quadrature weights sum to {weights.sum()!r}, expected 1")
            object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def span(self):
        return self.nodes[0], self.nodes[-1]

    def to_frame(self) -> pd.DataFrame:
        weights = self.weights if self.weights is not None else np.full(len(self), np.nan)
        return pd.DataFrame({NODE_COLUMNS[0]: self.nodes, NODE_COLUMNS[1]: weights})


def golub_welsch(moments, n: int) -> NodeSet:
    """
    Gauss rule with n nodes from raw moments m_0..m_{2n-1}.

    The Cholesky factor of the Hankel moment matrix, extended by one column,
    yields the recurrence coefficients of the Jacobi matrix; its eigenvalues are
    the nodes and the squared first eigenvector components the weights.
    """
    m = np.asarray(moments, dtype=float)
    if n < 1 or m.size < 2 * n:
        raise InvalidInputError(f"need {2 * n} moments for {n} nodes, got {m.size}")
    if abs(m[0] - 1.0) > WEIGHT_TOL:
        raise InvalidInputError(f"moment m_0 must be 1, got {m[0]!r}")
    if n == 1:
        return NodeSet(nodes=m[1:2], weights=np.ones(1), law="moments")

    hankel = np.array([[m[i + j] for j in range(n + 1)] for i in range(n)])
    upper, info = lapack.dpotrf(hankel[:, :n], lower=0, clean=1)
    if info > 0:
        raise MomentMatrixError(info)
    if info < 0:
        raise InvalidInputError(f"dpotrf rejected argument {-info}")
    extra = solve_triangular(upper, hankel[:, n], trans="T", lower=False)
    r = np.hstack([np.triu(upper), extra[:, None]])

    ratio = np.array([r[j, j + 1] / r[j, j] for j in range(n)])
    alpha = ratio - np.concatenate([[0.0], ratio[:-1]])
    beta = np.array([r[j + 1, j + 1] / r[j, j] for j in range(n - 1)])
    nodes, vectors = eigh_tridiagonal(alpha, beta)
    weights = m[0] * vectors[0, :] ** 2
    return NodeSet(nodes=nodes, weights=weights / weights.sum(), law="moments")


def hermite_nodes(mu: float, sigma: float, n: int) -> NodeSet:
    """Zeros of the probabilists' Hermite polynomial He_n, mapped to N(mu, sigma^2)."""
    if not sigma > 0 or n < 1:
        raise InvalidInputError(f"hermite nodes need sigma > 0 and n >= 1, got {sigma}, {n}")
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return NodeSet(nodes=mu + sigma * x, weights=w / w.sum(), law=f"normal({mu:.6g}, {sigma:.6g})")


def _affine_moments(moments: np.ndarray, shift: float, scale: float) -> np.ndarray:
    """Moments of shift + scale * Y from the moments of Y."""
    out = np.empty(moments.size)
    for k in range(moments.size):
        j = np.arange(k + 1)
        out[k] = np.sum(comb(k, j) * shift ** (k - j) * scale ** j * moments[j])
    return out


def _sum_moments(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Moments of A + B for independent A, B."""
    out = np.empty(first.size)
    for k in range(first.size):
        j = np.arange(k + 1)
        out[k] = np.sum(comb(k, j) * first[j] * second[k - j])
    return out


def _standard_truncated_moments(a: float, b: float, order: int) -> np.ndarray:
    if not a < b:
        raise TruncationError(f"empty truncation interval ({a}, {b}) in standard units")
    mass = norm.sf(a) - norm.sf(b) if a > 0 else norm.cdf(b) - norm.cdf(a)
    if mass < MIN_TRUNCATED_MASS:
        raise TruncationError(f"truncated normal keeps probability {mass:.3e}")
    pa, pb = norm.pdf(a), norm.pdf(b)

    def edge(x, px, k):
        return x ** k * px if np.isfinite(x) else 0.0

    std = np.zeros(order + 1)
    std[0] = 1.0
    if order >= 1:
        std[1] = (pa - pb) / mass
    for k in range(2, order + 1):
        std[k] = (k - 1) * std[k - 2] + (edge(a, pa, k - 1) - edge(b, pb, k - 1)) / mass
    return std


def truncated_normal_moments(mu: float, sigma: float, order: int,
                             upper: Optional[float] = None, lower: Optional[float] = None) -> np.ndarray:
    """Raw moments m_0..m_order of N(mu, sigma^2) conditioned on lower < X < upper."""
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    a = -np.inf if lower is None else (lower - mu) / sigma
    b = np.inf if upper is None else (upper - mu) / sigma
    return _affine_moments(_standard_truncated_moments(a, b, order), mu, sigma)


def propagated_truncated_nodes(n: int, shift: float, scale: float, noise_sd: float,
                               upper: Optional[float] = None, lower: Optional[float] = None) -> NodeSet:
    """
    Gauss nodes of X = shift + scale * Z + noise_sd * E.

    Z is standard normal truncated to (lower, upper) in standard units, E an
    independent standard normal. With noise_sd = 0 this is a plain truncated
    normal; otherwise it is the law of a Gaussian state some time after it was
    truncated. Moments are built for the standardised X so that the Hankel
    matrix stays well conditioned.
    """
    if not scale > 0 or noise_sd < 0:
        raise InvalidInputError(f"need scale > 0 and noise_sd >= 0, got {scale}, {noise_sd}")
    order = 2 * n - 1
    a = -np.inf if lower is None else lower
    b = np.inf if upper is None else upper
    z = _standard_truncated_moments(a, b, max(order, 2))
    mean = shift + scale * z[1]
    sd = np.sqrt(scale ** 2 * (z[2] - z[1] ** 2) + noise_sd ** 2)
    moments = _affine_moments(z, -scale * z[1] / sd, scale / sd)
    if noise_sd > 0:
        gaussian = _standard_truncated_moments(-np.inf, np.inf, max(order, 2))
        moments = _sum_moments(moments, _affine_moments(gaussian, 0.0, noise_sd / sd))
    rule = golub_welsch(moments[:order + 1], n)
    return NodeSet(nodes=mean + sd * rule.nodes, weights=rule.weights,
                   law=f"truncated normal shifted({mean:.6g}, {sd:.6g})")


def truncated_normal_nodes(mu: float, sigma: float, n: int,
                           upper: Optional[float] = None, lower: Optional[float] = None) -> NodeSet:
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    std_upper = None if upper is None else (upper - mu) / sigma
    std_lower = None if lower is None else (lower - mu) / sigma
    rule = propagated_truncated_nodes(n, mu, sigma, 0.0, upper=std_upper, lower=std_lower)
    return NodeSet(nodes=rule.nodes, weights=rule.weights,
                   law=f"truncated normal({mu:.6g}, {sigma:.6g}; {lower}, {upper})")


def chebyshev_nodes(a: float, b: float, n: int, kind: str = "lobatto") -> NodeSet:
    if not a < b:
        raise InvalidInputError(f"chebyshev interval needs a < b, got [{a}, {b}]")
    if kind == "lobatto":
        if n < 2:
            raise InvalidInputError("Chebyshev-Lobatto nodes need n >= 2")
        c = np.cos(np.pi * np.arange(n) / (n - 1))[::-1]
    elif kind == "roots":
        if n < 1:
            raise InvalidInputError("Chebyshev roots need n >= 1")
        c = np.cos(np.pi * (2 * np.arange(1, n + 1) - 1) / (2 * n))[::-1]
    else:
        raise InvalidInputError(f"unknown Chebyshev kind {kind!r}")
    c = 0.5 * (c - c[::-1])
    return NodeSet(nodes=a + 0.5 * (b - a) * (c + 1.0), law=f"chebyshev-{kind}[{a:.6g}, {b:.6g}]")


def normal_nodes(mu: float, sigma: float, n: int, rule: str = "hermite",
                 kind: str = "lobatto", width: float = 4.0) -> NodeSet:
    if rule == "hermite":
        return hermite_nodes(mu, sigma, n)
    if rule == "chebyshev":
        if n == 1:
            return NodeSet(nodes=np.array([mu]), law="point")
        return chebyshev_nodes(mu - width * sigma, mu + width * sigma, n, kind)
    raise InvalidInputError(f"unknown node rule {rule!r}")


def nested_subset(node_set: NodeSet, d: int) -> NodeSet:
    """Inner d nodes, dropping extremes alternately (an odd surplus drops one more on the right)."""
    n = len(node_set)
    if not 1 <= d <= n:
        raise InvalidInputError(f"nested subset needs 1 <= d <= N, got d={d}, N={n}")
    lo = (n - d) // 2
    hi = n - (n - d + 1) // 2
    return NodeSet(nodes=node_set.nodes[lo:hi], law=f"{node_set.law} inner {d}/{n}")


@dataclass(frozen=True)
class PolynomialApprox:
    node_set: NodeSet
    values: np.ndarray
    interpolator: BarycentricInterpolator = field(repr=False, compare=False)
    tilt: float = 0.0
    center: float = 0.0

    @classmethod
    def from_values(cls, node_set: NodeSet, values, tilt: float = 0.0) -> "PolynomialApprox":
        values = np.asarray(values, dtype=float)
        if values.shape != node_set.nodes.shape or not np.all(np.isfinite(values)):
            raise InvalidInputError("valuator must return one finite value per node")
        if not np.isfinite(tilt):
            raise InvalidInputError(f"tilt must be finite, got {tilt!r}")
        center = float(np.mean(node_set.nodes))
        scaled = values * np.exp(tilt * (node_set.nodes - center))
        return cls(node_set, values, BarycentricInterpolator(node_set.nodes, scaled), float(tilt), center)

    @property
    def degree(self) -> int:
        return len(self.node_set) - 1

    @property
    def bary_weights(self) -> np.ndarray:
        return self.interpolator.wi

    @property
    def span(self):
        return self.node_set.span

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.degree == 0:
            scaled = np.full(x.shape, self.values[0])
        else:
            scaled = self.interpolator(x)
        if self.tilt == 0.0:
            return scaled
        return scaled * np.exp(-self.tilt * (x - self.center))


@dataclass(frozen=True)
class DifferenceApprox:
    """Shocked surrogate g + h: base fit plus a low-degree fit of the shock-induced difference."""
    base: PolynomialApprox
    correction: PolynomialApprox

    @property
    def span(self):
        lo = min(self.base.span[0], self.correction.span[0])
        hi = max(self.base.span[1], self.correction.span[1])
        return lo, hi

    def __call__(self, x) -> np.ndarray:
        return self.base(x) + self.correction(x)


Surrogate = Union[PolynomialApprox, DifferenceApprox]


@dataclass(frozen=True)
class PiecewiseApprox:
    """Portfolio surrogate split by exercise state (optionality alive vs swap entered)."""
    unexercised: Surrogate
    exercised: Surrogate

    def __call__(self, x, exercised) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        exercised = np.asarray(exercised, dtype=bool)
        out = np.empty(x.shape)
        if (~exercised).any():
            out[~exercised] = self.unexercised(x[~exercised])
        if exercised.any():
            out[exercised] = self.exercised(x[exercised])
        return out


def fit(node_set: NodeSet, valuator: Callable, tilt: float = 0.0) -> PolynomialApprox:
    """One vectorised valuator call over all N nodes."""
    return PolynomialApprox.from_values(node_set, valuator(node_set.nodes), tilt)


def fit_difference(g: PolynomialApprox, nodes_d: NodeSet, valuator: Callable) -> DifferenceApprox:
    diffs = np.asarray(valuator(nodes_d.nodes), dtype=float) - g(nodes_d.nodes)
    return DifferenceApprox(base=g, correction=PolynomialApprox.from_values(nodes_d, diffs, g.tilt))


def evaluate(approx, x, exercised=None) -> np.ndarray:
    if isinstance(approx, PiecewiseApprox):
        if exercised is None:
            raise InvalidInputError("piecewise surrogate needs the exercise state")
        return approx(x, exercised)
    return approx(x)


def count_extrapolated(approx, x, exercised=None) -> int:
    x = np.asarray(x, dtype=float)
    if isinstance(approx, PiecewiseApprox):
        exercised = np.asarray(exercised, dtype=bool)
        return (count_extrapolated(approx.unexercised, x[~exercised])
                + count_extrapolated(approx.exercised, x[exercised]))
    if x.size == 0:
        return 0
    lo, hi = approx.span
    return int(np.count_nonzero((x < lo) | (x > hi)))

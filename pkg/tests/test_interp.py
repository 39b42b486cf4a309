import numpy as np
import pytest
from scipy.stats import truncnorm

from src.errors import InvalidInputError, MomentMatrixError, TruncationError
from src.interp import (
    NodeSet, PiecewiseApprox, PolynomialApprox, chebyshev_nodes, count_extrapolated, evaluate, fit,
    fit_difference, golub_welsch, hermite_nodes, nested_subset, normal_nodes, propagated_truncated_nodes,
    truncated_normal_moments, truncated_normal_nodes,
)

from tests.conftest import SEED, standard_normal_moments


@pytest.mark.parametrize("n", [1, 3, 5, 7])
def test_golub_welsch_recovers_gauss_hermite(n):
    rule = golub_welsch(standard_normal_moments(2 * n - 1), n)
    x, w = np.polynomial.hermite_e.hermegauss(n)
    np.testing.assert_allclose(rule.nodes, x, atol=1e-9)
    np.testing.assert_allclose(rule.weights, w / w.sum(), atol=1e-9)


def test_golub_welsch_rejects_indefinite_moments():
    with pytest.raises(MomentMatrixError) as err:
        golub_welsch([1.0, 0.0, -1.0, 0.0, 1.0, 0.0], 3)
    assert err.value.minor == 2
    with pytest.raises(InvalidInputError):
        golub_welsch([1.0, 0.0, 1.0], 2)


def test_hermite_nodes_are_scaled_and_normalised():
    rule = hermite_nodes(0.02, 0.01, 5)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert float(np.dot(rule.weights, rule.nodes)) == pytest.approx(0.02, abs=1e-15)
    assert float(np.dot(rule.weights, (rule.nodes - 0.02) ** 2)) == pytest.approx(1e-4, rel=1e-12)
    with pytest.raises(InvalidInputError):
        hermite_nodes(0.0, 0.0, 3)


def test_untruncated_moments_are_normal_moments():
    np.testing.assert_allclose(truncated_normal_moments(0.0, 1.0, 6), standard_normal_moments(6), atol=1e-13)


def test_one_sided_truncation_moments():
    m = truncated_normal_moments(0.0, 1.0, 2, upper=0.0)
    assert m[1] == pytest.approx(-np.sqrt(2.0 / np.pi), rel=1e-12)
    assert m[2] == pytest.approx(1.0, rel=1e-12)
    law = truncnorm(-np.inf, 0.5, loc=0.01, scale=0.02)
    m = truncated_normal_moments(0.01, 0.02, 3, upper=0.01 + 0.5 * 0.02)
    assert m[1] == pytest.approx(law.mean(), rel=1e-10)
    assert m[2] - m[1] ** 2 == pytest.approx(law.var(), rel=1e-8)


def test_truncated_nodes_stay_on_their_side():
    rule = truncated_normal_nodes(0.02, 0.01, 7, upper=0.015)
    assert np.all(rule.nodes < 0.015)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)
    law = truncnorm(-np.inf, -0.5, loc=0.02, scale=0.01)
    assert float(np.dot(rule.weights, rule.nodes)) == pytest.approx(law.mean(), rel=1e-8)
    lower = truncated_normal_nodes(0.02, 0.01, 5, lower=0.025)
    assert np.all(lower.nodes > 0.025)


def test_vanishing_truncated_mass():
    with pytest.raises(TruncationError):
        truncated_normal_nodes(0.0, 1.0, 3, lower=40.0)
    with pytest.raises(TruncationError):
        truncated_normal_moments(0.0, 1.0, 3, upper=-1.0, lower=1.0)


def test_propagated_nodes_match_mean_and_variance():
    shift, scale, noise_sd, z_star = 0.01, 0.008, 0.005, 0.3
    rule = propagated_truncated_nodes(6, shift, scale, noise_sd, lower=z_star)
    z = truncnorm(z_star, np.inf)
    mean = shift + scale * z.mean()
    var = scale ** 2 * z.var() + noise_sd ** 2
    assert float(np.dot(rule.weights, rule.nodes)) == pytest.approx(mean, rel=1e-9)
    assert float(np.dot(rule.weights, (rule.nodes - mean) ** 2)) == pytest.approx(var, rel=1e-8)
    # the noise spreads nodes across the truncation point
    assert rule.nodes[0] < shift + scale * z_star


def test_propagated_without_noise_is_plain_truncation():
    plain = truncated_normal_nodes(0.0, 2.0, 4, upper=1.0)
    propagated = propagated_truncated_nodes(4, 0.0, 2.0, 0.0, upper=0.5)
    np.testing.assert_allclose(plain.nodes, propagated.nodes, rtol=1e-14)


def test_chebyshev_lobatto_includes_endpoints():
    rule = chebyshev_nodes(-1.0, 1.0, 5)
    np.testing.assert_allclose(rule.nodes, [-1.0, -np.sqrt(0.5), 0.0, np.sqrt(0.5), 1.0], atol=1e-15)
    assert rule.weights is None
    roots = chebyshev_nodes(0.0, 2.0, 4, kind="roots")
    assert roots.nodes[0] > 0.0 and roots.nodes[-1] < 2.0
    np.testing.assert_allclose(roots.nodes - 1.0, -(roots.nodes[::-1] - 1.0), atol=1e-15)


def test_normal_nodes_dispatch():
    assert len(normal_nodes(0.0, 1.0, 3)) == 3
    cheb = normal_nodes(0.0, 1.0, 5, rule="chebyshev", width=4.0)
    assert cheb.span == (-4.0, 4.0)
    assert len(normal_nodes(0.3, 1.0, 1, rule="chebyshev")) == 1
    with pytest.raises(InvalidInputError):
        normal_nodes(0.0, 1.0, 3, rule="legendre")


def test_node_set_validation():
    with pytest.raises(InvalidInputError):
        NodeSet(nodes=np.array([0.0, 0.0, 1.0]))
    with pytest.raises(InvalidInputError):
        NodeSet(nodes=np.array([0.0, 1.0]), weights=np.array([0.5, 0.6]))


@pytest.mark.parametrize("d,expected", [(7, slice(0, 7)), (6, slice(0, 6)), (5, slice(1, 6)), (1, slice(3, 4))])
def test_nested_subset_drops_extremes(d, expected):
    base = NodeSet(nodes=np.arange(7.0))
    np.testing.assert_array_equal(nested_subset(base, d).nodes, np.arange(7.0)[expected])


def test_nested_subset_bounds():
    with pytest.raises(InvalidInputError):
        nested_subset(NodeSet(nodes=np.arange(3.0)), 4)


def test_polynomial_interpolates_and_reproduces_cubics():
    nodes = hermite_nodes(0.0, 1.0, 5)
    cubic = lambda x: 1.0 - 2.0 * x + 0.5 * x ** 3
    approx = fit(nodes, cubic)
    np.testing.assert_allclose(approx(nodes.nodes), cubic(nodes.nodes), rtol=1e-13)
    x = np.linspace(-3.0, 3.0, 13)
    np.testing.assert_allclose(approx(x), cubic(x), atol=1e-10)
    assert approx.degree == 4


def test_constant_surrogate():
    approx = PolynomialApprox.from_values(NodeSet(nodes=np.array([0.5])), [2.0])
    np.testing.assert_array_equal(approx(np.array([-1.0, 3.0])), [2.0, 2.0])
    with pytest.raises(InvalidInputError):
        PolynomialApprox.from_values(NodeSet(nodes=np.array([0.0, 1.0])), [1.0, np.nan])


def test_difference_at_full_order_matches_direct_fit():
    nodes = hermite_nodes(0.02, 0.01, 7)
    base = lambda x: np.exp(-3.0 * x) * 100.0
    shocked = lambda x: np.exp(-3.1 * x) * 100.0 + 0.2
    g = fit(nodes, base)
    combined = fit_difference(g, nodes, shocked)
    direct = fit(nodes, shocked)
    x = np.linspace(-0.02, 0.06, 17)
    np.testing.assert_allclose(combined(x), direct(x), rtol=1e-9)
    low = fit_difference(g, nested_subset(nodes, 3), shocked)
    inner = nested_subset(nodes, 3).nodes
    np.testing.assert_allclose(low(inner), shocked(inner), rtol=1e-12)
    assert low.span == g.span


def test_piecewise_evaluation_and_extrapolation_count():
    left = fit(NodeSet(nodes=np.array([0.0, 1.0])), lambda x: x)
    right = fit(NodeSet(nodes=np.array([0.0, 1.0])), lambda x: -x)
    both = PiecewiseApprox(unexercised=left, exercised=right)
    x = np.array([0.5, 0.5, 2.0])
    state = np.array([False, True, True])
    np.testing.assert_allclose(evaluate(both, x, state), [0.5, -0.5, -2.0])
    assert count_extrapolated(both, x, state) == 1
    assert count_extrapolated(left, np.array([-1.0, 0.5, 3.0])) == 2
    with pytest.raises(InvalidInputError):
        evaluate(both, x)


def test_barycentric_form_equals_lagrange_sum():
    nodes = hermite_nodes(0.0, 1.0, 7).nodes
    runge = lambda x: 1.0 / (1.0 + 25.0 * x ** 2)
    approx = fit(NodeSet(nodes=nodes), runge)
    for x in (0.0, 0.3):
        basis = [np.prod([(x - nodes[m]) / (nodes[j] - nodes[m]) for m in range(nodes.size) if m != j])
                 for j in range(nodes.size)]
        assert approx(np.array([x]))[0] == pytest.approx(np.dot(basis, runge(nodes)), abs=1e-12)


def test_gauss_nodes_beat_chebyshev_in_mean_square():
    x = np.random.default_rng(SEED).standard_normal(1_000_000)
    hermite = fit(normal_nodes(0.0, 1.0, 5, "hermite"), np.exp)
    chebyshev = fit(normal_nodes(0.0, 1.0, 5, "chebyshev"), np.exp)
    gap = (chebyshev(x) - np.exp(x)) ** 2 - (hermite(x) - np.exp(x)) ** 2
    assert gap.mean() > 3 * gap.std(ddof=1) / np.sqrt(gap.size)


def test_tilted_fit_matches_nodes_and_absorbs_exponentials():
    nodes = hermite_nodes(0.0, 1.0, 5)
    bond = lambda x: 50.0 * np.exp(-3.0 * x)
    plain = fit(nodes, bond)
    tilted = fit(nodes, bond, tilt=1.5)
    np.testing.assert_allclose(tilted(nodes.nodes), bond(nodes.nodes), rtol=1e-12)
    x = np.linspace(-3.0, 3.0, 61)
    assert np.abs(tilted(x) - bond(x)).max() < 0.25 * np.abs(plain(x) - bond(x)).max()
    # a tilt equal to the decay rate leaves a constant to interpolate
    exact = fit(nodes, bond, tilt=3.0)
    np.testing.assert_allclose(exact(x), bond(x), rtol=1e-10)


def test_tilted_constant_surrogate_decays_from_its_node():
    approx = PolynomialApprox.from_values(NodeSet(nodes=np.array([0.5])), [2.0], tilt=1.0)
    np.testing.assert_allclose(approx(np.array([0.5, 1.5])), [2.0, 2.0 * np.exp(-1.0)])
    with pytest.raises(InvalidInputError):
        PolynomialApprox.from_values(NodeSet(nodes=np.array([0.5])), [2.0], tilt=np.inf)


def test_tilted_difference_at_full_order_matches_direct_fit():
    nodes = hermite_nodes(0.02, 0.01, 7)
    g = fit(nodes, lambda x: np.exp(-3.0 * x) * 100.0, tilt=2.0)
    shocked = lambda x: np.exp(-3.1 * x) * 100.0 + 0.2
    x = np.linspace(-0.02, 0.06, 17)
    np.testing.assert_allclose(fit_difference(g, nodes, shocked)(x), fit(nodes, shocked, tilt=2.0)(x), rtol=1e-9)

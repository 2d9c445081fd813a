import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from spoc.lgr import (
    MAX_DEGREE,
    ExtrapolationWarning,
    differentiation_matrix,
    integration_matrix,
    interpolate,
    lgr_points,
)


def test_single_point_rule():
    rule = lgr_points(1)
    assert rule.nodes.tolist() == [-1.0]
    assert rule.weights.tolist() == pytest.approx([2.0])
    assert rule.support.tolist() == [-1.0, 1.0]


def test_two_point_rule_matches_root_and_moment_oracle():
    x = sp.symbols("x")
    radau = sp.legendre(1, x) + sp.legendre(2, x)
    roots = sorted(float(r) for r in sp.solve(radau, x))
    # weights from exactness on 1 and x
    vander = np.vander(roots, 2, increasing=True).T
    moments = np.array([2.0, 0.0])
    weights = np.linalg.solve(vander, moments)
    rule = lgr_points(2)
    np.testing.assert_allclose(rule.nodes, roots, atol=1e-15)
    np.testing.assert_allclose(rule.nodes, [-1.0, 1.0 / 3.0], atol=1e-15)
    np.testing.assert_allclose(rule.weights, weights, atol=1e-14)
    np.testing.assert_allclose(rule.weights, [0.5, 1.5], atol=1e-14)


def test_three_point_second_moment():
    rule = lgr_points(3)
    assert np.sum(rule.weights * rule.nodes**2) == pytest.approx(2.0 / 3.0, abs=1e-14)


@pytest.mark.parametrize("n", [0, -1, MAX_DEGREE + 1])
def test_invalid_degree(n):
    with pytest.raises(ValueError):
        lgr_points(n)


@pytest.mark.parametrize("n", range(1, 13))
def test_quadrature_exactness(n):
    rule = lgr_points(n)
    for p in range(2 * n - 1):
        exact = (1.0 - (-1.0) ** (p + 1)) / (p + 1)
        assert abs(np.sum(rule.weights * rule.nodes**p) - exact) <= 1e-12


@pytest.mark.parametrize("n", range(1, 13))
def test_rule_structure(n):
    rule = lgr_points(n)
    assert rule.nodes[0] == -1.0
    assert np.all(np.diff(rule.support) > 0)
    assert rule.support[-1] == 1.0
    assert np.all(rule.weights > 0)
    assert np.sum(rule.weights) == pytest.approx(2.0, abs=1e-13)


@pytest.mark.parametrize("n", range(1, 13))
def test_differentiation_exactness(n):
    rule = lgr_points(n)
    d = differentiation_matrix(rule)
    assert d.shape == (n, n + 1)
    np.testing.assert_allclose(d.sum(axis=1), 0.0, atol=1e-12)
    rng = np.random.default_rng(n)
    coeffs = rng.normal(size=n + 1)  # degree n
    p = np.polynomial.Polynomial(coeffs)
    err = np.max(np.abs(d @ p(rule.support) - p.deriv()(rule.nodes)))
    assert err <= 1e-10


def test_differentiation_of_identity_is_ones():
    rule = lgr_points(4)
    np.testing.assert_allclose(differentiation_matrix(rule) @ rule.support, 1.0, atol=1e-13)


def test_two_point_matrix_against_symbolic_lagrange_basis():
    x = sp.symbols("x")
    pts = [sp.Integer(-1), sp.Rational(1, 3), sp.Integer(1)]
    expected = np.zeros((2, 3))
    for j, xj in enumerate(pts):
        ell = sp.Integer(1)
        for m, xm in enumerate(pts):
            if m != j:
                ell *= (x - xm) / (xj - xm)
        dell = sp.diff(ell, x)
        for i, xi in enumerate(pts[:2]):
            expected[i, j] = float(dell.subs(x, xi))
    np.testing.assert_allclose(differentiation_matrix(lgr_points(2)), expected, atol=1e-13)


def test_high_degree_differentiation_is_stable():
    rule = lgr_points(MAX_DEGREE)
    d = differentiation_matrix(rule)
    err = np.max(np.abs(d @ np.sin(rule.support) - np.cos(rule.nodes)))
    assert err < 1e-10


def test_integration_matrix_inverts_differentiation():
    rule = lgr_points(6)
    a = integration_matrix(rule)
    p = np.polynomial.Polynomial([0.3, -1.0, 0.5, 2.0, 0.1])
    y = p(rule.support)
    np.testing.assert_allclose(y[0] + a @ p.deriv()(rule.nodes), y[1:], atol=1e-13)


def test_mapped_rule_integrates_on_subinterval():
    rule = lgr_points(5).mapped(0.5, 2.0)
    assert rule.nodes[0] == 0.5 and rule.support[-1] == 2.0
    assert np.sum(rule.weights * rule.nodes**3) == pytest.approx((2.0**4 - 0.5**4) / 4, rel=1e-13)


def test_interpolate_hits_stored_values():
    rule = lgr_points(5)
    vals = np.exp(rule.support)
    for k, tau in enumerate(rule.support):
        assert interpolate(rule.support, vals, tau) == vals[k]


def test_interpolate_cubic():
    rule = lgr_points(4)
    assert interpolate(rule.support, rule.support**3, 0.5) == pytest.approx(0.125, abs=1e-14)


@pytest.mark.parametrize("n", [3, 7, 12])
def test_interpolate_against_monomial_oracle(n):
    rng = np.random.default_rng(100 + n)
    rule = lgr_points(n)
    coeffs = rng.normal(size=n + 1)
    q = rng.uniform(-1, 1, 100)
    got = interpolate(rule.support, np.polyval(coeffs, rule.support), q)
    want = np.polyval(coeffs, q)
    assert np.max(np.abs(got - want) / (1 + np.abs(want))) <= 1e-12


def test_interpolate_vector_values():
    rule = lgr_points(3)
    vals = np.column_stack([rule.support, rule.support**2])
    out = interpolate(rule.support, vals, np.array([0.0, 0.5]))
    np.testing.assert_allclose(out, [[0.0, 0.0], [0.5, 0.25]], atol=1e-14)


def test_extrapolation_is_flagged():
    rule = lgr_points(3)
    with pytest.warns(ExtrapolationWarning):
        interpolate(rule.support, rule.support, 1.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        interpolate(rule.support, rule.support, 1.0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 12), data=st.data())
def test_quadrature_exactness_property(n, data):
    p = data.draw(st.integers(0, 2 * n - 2))
    rule = lgr_points(n)
    exact = (1.0 - (-1.0) ** (p + 1)) / (p + 1)
    assert abs(np.sum(rule.weights * rule.nodes**p) - exact) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 12),
       coeffs=st.lists(st.floats(-1, 1), min_size=1, max_size=13))
def test_differentiation_exactness_property(n, coeffs):
    coeffs = coeffs[: n + 1]
    p = np.polynomial.Polynomial(coeffs)
    rule = lgr_points(n)
    err = np.max(np.abs(differentiation_matrix(rule) @ p(rule.support) - p.deriv()(rule.nodes)))
    assert err <= 1e-10


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, MAX_DEGREE))
def test_first_node_is_minus_one(n):
    assert lgr_points(n).nodes[0] == -1.0

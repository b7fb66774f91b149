import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite_e as H
from numpy.polynomial import legendre as L

from gpcflock.polychaos import (
    HERMITE,
    LEGENDRE,
    GpcScalar,
    eval_all,
    eval_expansion,
    eval_poly,
    gauss_nodes,
    hermite_triple_closed_form,
    make_basis,
    project,
    project_values,
    reconstruct_at_nodes,
    triple_tensor,
    variance_of_expansion,
)

families = st.sampled_from([HERMITE, LEGENDRE])


# evaluation ------------------------------------------------------------------


def test_hermite_values_frozen():
    b = make_basis(HERMITE, 3)
    assert eval_poly(b, 0, 3.7) == 1.0
    assert eval_poly(b, 2, 0.0) == -1.0
    assert eval_poly(b, 1, 2.0) == 2.0
    assert eval_poly(b, 3, 2.0) == pytest.approx(2.0)  # x^3 - 3x


def test_eval_matches_numpy_series():
    # independent oracle: numpy's own HermiteE / Legendre series evaluation
    x = np.linspace(-3, 3, 13)
    for fam, series_val in ((HERMITE, H.hermeval), (LEGENDRE, L.legval)):
        table = eval_all(make_basis(fam, 8), x)
        for n in range(9):
            np.testing.assert_allclose(table[n], series_val(x, np.eye(9)[n]), rtol=1e-12, atol=1e-10)


def test_eval_out_of_range():
    with pytest.raises(IndexError):
        eval_poly(make_basis(HERMITE, 2), 3, 0.0)


# quadrature --------------------------------------------------------------------


def test_gauss_nodes_small_rules():
    q = gauss_nodes(HERMITE, 1)
    assert q.nodes.tolist() == [0.0] and q.weights.tolist() == [1.0]
    q = gauss_nodes(HERMITE, 2)
    np.testing.assert_allclose(q.nodes, [-1.0, 1.0], rtol=1e-15)
    np.testing.assert_allclose(q.weights, [0.5, 0.5], rtol=1e-15)


def test_gauss_hermite_eighth_moment():
    q = gauss_nodes(HERMITE, 5)
    assert q.integrate(q.nodes**8) == pytest.approx(105.0, rel=1e-12)


def test_gauss_legendre_uniform_moments():
    q = gauss_nodes(LEGENDRE, 4)
    assert q.integrate(np.ones(4)) == pytest.approx(1.0)
    assert q.integrate(q.nodes**2) == pytest.approx(1.0 / 3.0, rel=1e-14)
    assert q.integrate(q.nodes**6) == pytest.approx(1.0 / 7.0, rel=1e-14)


def test_gauss_nodes_rejects_zero():
    with pytest.raises(ValueError):
        gauss_nodes(HERMITE, 0)


@settings(max_examples=30, deadline=None)
@given(fam=families, order=st.integers(0, 30))
def test_orthogonality(fam, order):
    b = make_basis(fam, order)
    phi = eval_all(b, b.quadrature.nodes)
    gram = (phi * b.quadrature.weights) @ phi.T
    expected = np.diag(b.norms)
    scale = np.sqrt(np.outer(b.norms, b.norms))
    assert np.max(np.abs(gram - expected) / scale) < 1e-12


def test_norms_frozen():
    np.testing.assert_array_equal(make_basis(HERMITE, 4).norms, [1, 1, 2, 6, 24])
    np.testing.assert_allclose(make_basis(LEGENDRE, 3).norms, [1, 1 / 3, 1 / 5, 1 / 7])


# triple tensor -----------------------------------------------------------------


def test_triple_tensor_frozen_entries():
    e = triple_tensor(make_basis(HERMITE, 4)).e
    assert e[1, 1, 2] == 2.0
    assert e[1, 1, 1] == 0.0
    for m in range(5):
        for h in range(5):
            assert e[0, m, h] == (math.factorial(h) if m == h else 0.0)


@pytest.mark.parametrize("order", [3, 6, 10])
def test_hermite_tensor_closed_form(order):
    e = triple_tensor(make_basis(HERMITE, order)).e
    for l in range(order + 1):
        for m in range(order + 1):
            for h in range(order + 1):
                assert e[l, m, h] == pytest.approx(hermite_triple_closed_form(l, m, h), rel=1e-12, abs=1e-12)


def test_legendre_tensor_against_polynomial_integration():
    # oracle: multiply Legendre series exactly and integrate against dx/2
    order = 5
    e = triple_tensor(make_basis(LEGENDRE, order)).e
    for l in range(order + 1):
        for m in range(order + 1):
            for h in range(order + 1):
                prod = L.legmul(L.legmul(np.eye(order + 1)[l], np.eye(order + 1)[m]), np.eye(order + 1)[h])
                anti = L.legint(prod)
                exact = (L.legval(1.0, anti) - L.legval(-1.0, anti)) / 2.0
                assert e[l, m, h] == pytest.approx(exact, abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(fam=families, order=st.integers(0, 12))
def test_triple_tensor_symmetry_and_selection(fam, order):
    e = triple_tensor(make_basis(fam, order)).e
    np.testing.assert_array_equal(e, e.transpose(1, 0, 2))
    np.testing.assert_array_equal(e, e.transpose(2, 1, 0))
    idx = np.indices(e.shape)
    l, m, h = idx
    forbidden = ((l + m + h) % 2 == 1) | (np.abs(l - m) > h) | (h > l + m)
    assert np.all(e[forbidden] == 0.0)


def test_triple_tensor_refuses_short_rule():
    b = make_basis(HERMITE, 6, nodes=5)
    with pytest.raises(ValueError):
        triple_tensor(b)


# projection ----------------------------------------------------------------------


def test_project_frozen_examples():
    b = make_basis(HERMITE, 4)
    np.testing.assert_allclose(project(lambda x: np.full_like(x, 3.0), b).coeffs, [3, 0, 0, 0, 0], atol=1e-14)
    np.testing.assert_allclose(project(lambda x: 2.0 + 0.5 * x, b).coeffs, [2, 0.5, 0, 0, 0], atol=1e-14)
    np.testing.assert_allclose(project(lambda x: x**2, b).coeffs, [1, 0, 1, 0, 0], atol=1e-14)


def test_project_non_finite_raises():
    with pytest.raises(FloatingPointError):
        project(lambda x: np.where(x > 0, np.nan, x), make_basis(HERMITE, 2))


def test_eval_expansion_examples():
    b = make_basis(HERMITE, 3)
    assert eval_expansion(GpcScalar(np.array([5.0, 0, 0, 0])), b, 1.3) == 5.0
    assert eval_expansion(GpcScalar(np.array([2.0, 0.5, 0, 0])), b, 0.0) == 2.0
    sq = project(lambda x: x**2, b)
    assert eval_expansion(sq, b, 2.0) == pytest.approx(4.0, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    fam=families,
    coeffs=st.lists(st.floats(-5, 5), min_size=1, max_size=9),
    extra=st.integers(0, 3),
)
def test_round_trip_polynomial(fam, coeffs, extra):
    # random monomial-basis polynomial of degree <= M
    order = len(coeffs) - 1 + extra
    b = make_basis(fam, order)
    p = np.polynomial.Polynomial(coeffs)
    g = project(p, b)
    pts = np.random.default_rng(0).uniform(-1, 1, 20) * (3 if fam == HERMITE else 1)
    scale = max(1.0, np.max(np.abs(p(pts))), np.sum(np.abs(coeffs)) * 3.0 ** len(coeffs))
    np.testing.assert_allclose(eval_expansion(g, b, pts), p(pts), rtol=1e-10, atol=1e-12 * scale)


def test_project_values_and_reconstruct_invert():
    b = make_basis(HERMITE, 5)
    coeffs = np.random.default_rng(3).normal(size=(4, 2, 6))
    np.testing.assert_allclose(project_values(reconstruct_at_nodes(coeffs, b), b), coeffs, atol=1e-12)


# variance ------------------------------------------------------------------------


def test_variance_examples():
    b = make_basis(HERMITE, 3)
    assert variance_of_expansion(GpcScalar(np.array([4.0, 0, 0, 0])), b) == 0.0
    assert variance_of_expansion(GpcScalar(np.array([2.0, 0.3, 0, 0])), b) == pytest.approx(0.09)
    assert variance_of_expansion(GpcScalar(np.array([0.0, 0, 1, 0])), b) == 2.0


def test_parseval_increases_to_lognormal_variance():
    # Var[exp(xi)] = e^2 - e for xi ~ N(0, 1)
    exact = math.e**2 - math.e
    prev = -1.0
    for M in range(1, 11):
        b = make_basis(HERMITE, M)
        var = variance_of_expansion(project(np.exp, b), b)
        assert prev <= var <= exact + 1e-12
        prev = var
    assert exact - prev < 1e-4


@settings(max_examples=30, deadline=None)
@given(coeffs=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), fam=families)
def test_variance_nonnegative(coeffs, fam):
    b = make_basis(fam, len(coeffs) - 1)
    assert variance_of_expansion(GpcScalar(np.array(coeffs)), b) >= 0.0

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semrb.sem import (ElementGeometry, ReferenceElement, diff_matrix, element_blocks, gll_rule,
                       lagrange_matrix)


@pytest.mark.parametrize("p, nodes, weights", [
    (1, [-1, 1], [1, 1]),
    (2, [-1, 0, 1], [1 / 3, 4 / 3, 1 / 3]),
    (4, [-1, -np.sqrt(3 / 7), 0, np.sqrt(3 / 7), 1], [1 / 10, 49 / 90, 32 / 45, 49 / 90, 1 / 10]),
])
def test_gll_tabulated(p, nodes, weights):
    x, w = gll_rule(p)
    np.testing.assert_allclose(x, nodes, atol=1e-15)
    np.testing.assert_allclose(w, weights, rtol=1e-14)


@given(st.integers(1, 16), st.data())
def test_gll_exact_to_degree_2p_minus_1(p, data):
    k = data.draw(st.integers(0, 2 * p - 1))
    x, w = gll_rule(p)
    exact = 0.0 if k % 2 else 2.0 / (k + 1)
    assert w @ x ** k == pytest.approx(exact, abs=1e-13)


def test_gll_matches_legendre_derivative_roots():
    p = 9
    x, _ = gll_rule(p)
    roots = np.polynomial.legendre.Legendre.basis(p).deriv().roots()
    np.testing.assert_allclose(x[1:-1], np.sort(roots), atol=1e-14)


def test_gll_rejects_order_zero():
    with pytest.raises(ValueError):
        gll_rule(0)


@given(st.integers(1, 12), st.data())
def test_diff_matrix_exact_on_polynomials(p, data):
    k = data.draw(st.integers(0, p))
    x, _ = gll_rule(p)
    D = diff_matrix(x)
    expected = k * x ** (k - 1) if k else np.zeros_like(x)
    np.testing.assert_allclose(D @ x ** k, expected, atol=1e-10 * max(1, p) ** 2)


def test_lagrange_matrix_interpolates():
    x, _ = gll_rule(6)
    np.testing.assert_allclose(lagrange_matrix(x, x), np.eye(7), atol=1e-15)
    pts = np.linspace(-1, 1, 13)
    L = lagrange_matrix(x, pts)
    np.testing.assert_allclose(L.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(L @ x ** 5, pts ** 5, atol=1e-13)


def test_duplicate_nodes_rejected():
    with pytest.raises(ValueError):
        diff_matrix([0.0, 0.5, 0.5])


def test_reference_element_sizes():
    ref = ReferenceElement(8)
    assert ref.n_velocity == 81 and ref.n_pressure == 49
    assert len(ref.boundary) == 32 and len(ref.interior) == 49
    assert ref.weights.sum() == pytest.approx(4.0)
    with pytest.raises(ValueError):
        ReferenceElement(1)


GEOM = ElementGeometry(1.0, 1.5, 0.3, 1.1)


@pytest.mark.parametrize("p", [3, 5])
def test_diffusion_symmetric_psd_with_constant_kernel(p):
    ref = ReferenceElement(p)
    blk = element_blocks(ref, GEOM)
    K = blk.diffusion
    np.testing.assert_allclose(K, K.T, atol=1e-13)
    ev = np.linalg.eigvalsh(K)
    assert ev[0] > -1e-12 and np.sum(ev < 1e-10) == 1
    np.testing.assert_allclose(K @ np.ones(ref.n_velocity), 0, atol=1e-12)
    np.testing.assert_array_equal(blk.advection, 0.0)


def test_divergence_annihilates_constants_and_integrates_linear_fields():
    ref = ReferenceElement(4)
    blk = element_blocks(ref, GEOM)
    xy = GEOM.map_points(ref.points)
    n = ref.n_velocity
    np.testing.assert_allclose(blk.divergence @ np.ones(2 * n), 0, atol=1e-13)
    # v = (x, 0): div v = 1, so the rows integrate each pressure basis function
    v = np.concatenate([xy[:, 0], np.zeros(n)])
    area = (GEOM.x1 - GEOM.x0) * (GEOM.y1 - GEOM.y0)
    assert np.sum(blk.divergence @ v) == pytest.approx(area, rel=1e-13)


def test_advection_with_constant_wind():
    ref = ReferenceElement(4)
    n = ref.n_velocity
    wind = np.vstack([np.full(n, 2.0), np.full(n, -1.0)])
    blk = element_blocks(ref, GEOM, wind=wind)
    xy = GEOM.map_points(ref.points)
    f = xy[:, 0] ** 2 + 3 * xy[:, 1]
    # (w . grad f) tested against each basis function, diagonal GLL mass
    grad = 2 * 2 * xy[:, 0] - 3
    hx, hy = (GEOM.x1 - GEOM.x0) / 2, (GEOM.y1 - GEOM.y0) / 2
    np.testing.assert_allclose(blk.advection @ f, ref.weights * hx * hy * grad, atol=1e-12)


def _lagrange_derivative(nodes, j, t):
    total = 0.0
    for m in range(len(nodes)):
        if m == j:
            continue
        term = 1.0 / (nodes[j] - nodes[m])
        for k in range(len(nodes)):
            if k not in (j, m):
                term *= (t - nodes[k]) / (nodes[j] - nodes[k])
        total += term
    return total


def test_diffusion_matches_brute_force_quadrature():
    p = 3
    ref = ReferenceElement(p)
    x, w = gll_rule(p)
    hx, hy = (GEOM.x1 - GEOM.x0) / 2, (GEOM.y1 - GEOM.y0) / 2
    nu = np.array([[1.3, 0.2], [0.2, 0.7]])
    K = np.zeros((ref.n_velocity, ref.n_velocity))
    for i, (ai, bi) in enumerate(ref.node_index):
        for j, (aj, bj) in enumerate(ref.node_index):
            for qa in range(p + 1):
                for qb in range(p + 1):
                    gi = np.array([_lagrange_derivative(x, ai, x[qa]) * (qb == bi) / hx,
                                   (qa == ai) * _lagrange_derivative(x, bi, x[qb]) / hy])
                    gj = np.array([_lagrange_derivative(x, aj, x[qa]) * (qb == bj) / hx,
                                   (qa == aj) * _lagrange_derivative(x, bj, x[qb]) / hy])
                    K[i, j] += w[qa] * w[qb] * hx * hy * (gi @ nu @ gj)
    blk = element_blocks(ref, GEOM, (nu, np.eye(2), np.eye(2)))
    np.testing.assert_allclose(blk.diffusion, K, atol=1e-12)


def test_split_blocks_are_consistent():
    ref = ReferenceElement(4)
    A, B, Bt, C, Db, Di = element_blocks(ref, GEOM).split()
    np.testing.assert_allclose(B, Bt.T, atol=1e-14)
    assert A.shape == (2 * 16, 2 * 16) and C.shape == (2 * 9, 2 * 9)
    assert Db.shape == (9, 32) and Di.shape == (9, 18)


def test_wind_shape_checked():
    ref = ReferenceElement(3)
    with pytest.raises(ValueError):
        element_blocks(ref, GEOM, wind=np.zeros((2, 5)))

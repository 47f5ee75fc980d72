from fractions import Fraction

import numpy as np
import pytest

from elastweak.polyform import (K, M, R, V, MatrixField, PolyForm, J_op, K_op,
                                S1_inv, S_op, S_prime_op, cross_skew_check, eps_field,
                                ext_d, inject_vect_sign_error, koszul, matrix_from_proxy_1,
                                matrix_from_proxy_2, matrix_proxy_1, matrix_proxy_2,
                                random_matrix_field, random_polyform, skew_field, skw,
                                three_form_value, vect, vect_inv, wedge, xi, xi_inv)


def frac_array(rng, shape):
    vals = [Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 4)))
            for _ in range(int(np.prod(shape)))]
    return np.array(vals, dtype=object).reshape(shape)


def cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]], dtype=object)


E = [np.array([int(i == j) for j in range(3)], dtype=object) for i in range(3)]


def test_value_space_dimensions():
    assert (R.dim, V.dim, K.dim, M.dim) == (1, 3, 3, 9)


# ---------------------------------------------------------------------------
# wedge, koszul, d

def test_wedge_basis_pairing():
    dxdy = wedge(PolyForm.dx(0), PolyForm.dx(1))
    assert dxdy.evaluate([0, 0, 0], [[1, 0, 0], [0, 1, 0]]) == [1]
    assert wedge(PolyForm.dx(0), PolyForm.dx(0)).is_zero()


def test_wedge_graded_anticommutative():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a = random_polyform(rng, 1, R, 2)
        b = random_polyform(rng, 1, R, 2)
        assert (wedge(a, b) + wedge(b, a)).is_zero()


def test_evaluation_is_alternating():
    rng = np.random.default_rng(2)
    w = random_polyform(rng, 2, R, 1)
    x = [Fraction(1, 3), Fraction(-2), Fraction(5, 7)]
    u, v = [1, 2, 0], [0, -1, 3]
    assert w.evaluate(x, [u, v])[0] == -w.evaluate(x, [v, u])[0]
    assert w.evaluate(x, [u, u])[0] == 0


def test_koszul_examples():
    x, y = PolyForm.coordinate(0), PolyForm.coordinate(1)
    expected = wedge(x, PolyForm.dx(1)) - wedge(y, PolyForm.dx(0))
    assert koszul(wedge(PolyForm.dx(0), PolyForm.dx(1))) == expected
    assert koszul(PolyForm.dx(0)) == x
    vol = wedge(wedge(PolyForm.dx(0), PolyForm.dx(1)), PolyForm.dx(2))
    assert koszul(koszul(vol)).is_zero()


def test_ext_d_examples():
    x = PolyForm.coordinate(0)
    assert ext_d(x.mul_coordinate(0)) == wedge(x * 2, PolyForm.dx(0))
    rng = np.random.default_rng(3)
    for k in range(3):
        w = random_polyform(rng, k, V, 4, density=0.3)
        assert ext_d(w).k == k + 1 and ext_d(w).degree <= w.degree - 1
        if k < 2:
            assert ext_d(ext_d(w)).is_zero()


def test_d_of_position_two_form_is_three_volume():
    # x dy^dz - y dx^dz + z dx^dy is the proxy of the field (x, y, z)
    x, y, z = (PolyForm.coordinate(i) for i in range(3))
    dx = [PolyForm.dx(i) for i in range(3)]
    w = wedge(x, wedge(dx[1], dx[2])) - wedge(y, wedge(dx[0], dx[2])) \
        + wedge(z, wedge(dx[0], dx[1]))
    assert three_form_value(ext_d(w)) == PolyForm.constant(3)


# ---------------------------------------------------------------------------
# vect, Xi and the cross-product identities

def test_vect_displayed_example():
    q = np.array([[0, -3, 2], [3, 0, -1], [-2, 1, 0]])
    assert list(vect(q)) == [1, 2, 3]


def test_vect_round_trip_and_cross_product():
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = frac_array(rng, (3,))
        assert list(vect(vect_inv(v))) == list(v)
    assert list(vect_inv(E[2]) @ E[0]) == list(cross(E[2], E[0])) == list(E[1])


def test_vect_rejects_nonskew():
    with pytest.raises(ValueError):
        vect(np.eye(3))


def test_xi_of_identity_and_inverse_pair():
    assert (xi(np.eye(3, dtype=int)) == -2 * np.eye(3, dtype=int)).all()
    rng = np.random.default_rng(5)
    for _ in range(100):
        m = frac_array(rng, (3, 3))
        assert (xi_inv(xi(m)) == m).all()


def test_xi_cross_product_formula():
    rng = np.random.default_rng(6)
    for _ in range(20):
        F, v1, v2 = frac_array(rng, (3, 3)), frac_array(rng, (3,)), frac_array(rng, (3,))
        lhs = xi(F) @ cross(v1, v2)
        rhs = cross(v2, F @ v1) - cross(v1, F @ v2)
        assert (lhs == rhs).all()


def test_cross_skew_examples():
    left, right = cross_skew_check(E[0], E[1])
    assert list(left) == list(right) == [0, 0, 1]
    a = np.array([Fraction(2), Fraction(-1, 3), Fraction(5)], dtype=object)
    left, right = cross_skew_check(a, a)
    assert not any(left) and not any(right)
    rng = np.random.default_rng(7)
    for _ in range(100):
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        left, right = cross_skew_check(a, b)
        assert np.allclose(left, np.cross(a, b), atol=1e-14)
        assert np.allclose(left, right, atol=1e-14)


def test_vect_mutation_hook_breaks_cross_skew():
    with inject_vect_sign_error():
        left, right = cross_skew_check(E[0], E[1])
        assert list(left) != list(right)
    left, right = cross_skew_check(E[0], E[1])
    assert list(left) == list(right)


# ---------------------------------------------------------------------------
# K, S, S'

def test_K_on_constant():
    v = PolyForm.from_components([PolyForm.constant(0), PolyForm.constant(1),
                                  PolyForm.constant(0)], V)
    value = K_op(v).evaluate([1, 0, 0])
    two_skw = 2 * skw(np.outer(E[0], E[1]))
    assert value == list(vect(two_skw))
    assert K_op(PolyForm.zero(3, 0, V)).is_zero()


def test_S0_is_K_in_the_argument():
    rng = np.random.default_rng(8)
    for _ in range(10):
        coef = [PolyForm.constant(c) for c in frac_array(rng, (3,))]
        v = PolyForm.from_components(coef, V)
        v1 = list(frac_array(rng, (3,)))
        s0 = (ext_d(K_op(v)) - K_op(ext_d(v))).evaluate([0, 0, 0], [v1])
        assert S_op(v).evaluate([0, 0, 0], [v1]) == s0 == K_op(v).evaluate(v1)


def test_S1_invertible():
    rng = np.random.default_rng(9)
    for _ in range(100):
        w = random_polyform(rng, 1, V, 2, density=0.3)
        assert S1_inv(S_op(w)) == w


def test_dS_anticommutes():
    rng = np.random.default_rng(10)
    for _ in range(10):
        v = random_polyform(rng, 0, V, 3)
        assert (ext_d(S_op(v)) + S_op(ext_d(v))).is_zero()
        q = random_polyform(rng, 1, K, 3)
        assert (ext_d(S_prime_op(q)) + S_prime_op(ext_d(q))).is_zero()


def test_adjoint_pointwise_float():
    # pointwise evaluation of S w ^ mu and w ^ S' mu on random vector triples
    rng = np.random.default_rng(11)
    for _ in range(10):
        w = random_polyform(rng, 1, V, 2, exact=False)
        mu = random_polyform(rng, 1, K, 2, exact=False)
        lhs, rhs = wedge(S_op(w), mu), -wedge(w, S_prime_op(mu))
        x = rng.standard_normal(3)
        vecs = [rng.standard_normal(3) for _ in range(3)]
        assert np.allclose(lhs.evaluate(x, vecs), rhs.evaluate(x, vecs), atol=1e-12)


def test_operators_reject_wrong_values():
    with pytest.raises(ValueError):
        S_op(PolyForm.zero(3, 1, K))
    with pytest.raises(ValueError):
        S_prime_op(PolyForm.zero(3, 1, V))
    with pytest.raises(ValueError):
        S_op(PolyForm.zero(3, 3, V))


# ---------------------------------------------------------------------------
# matrix proxies and J

def test_proxy_two_of_identity():
    w = matrix_proxy_2(np.eye(3, dtype=int), V)
    assert w.evaluate([0, 0, 0], [[1, 0, 0], [0, 1, 0]]) == [0, 0, 1]


def test_identification_for_constant_fields():
    rng = np.random.default_rng(12)
    for _ in range(100):
        F = frac_array(rng, (3, 3))
        lhs = matrix_from_proxy_2(S_op(matrix_proxy_1(F, V)))
        assert lhs == MatrixField.constant(xi(F))


def test_proxy_round_trips():
    rng = np.random.default_rng(13)
    F = random_matrix_field(rng, 2)
    assert matrix_from_proxy_1(matrix_proxy_1(F, K)) == F
    assert matrix_from_proxy_2(matrix_proxy_2(F, V)) == F


def test_J_annihilates_strains_and_skew_fields():
    rng = np.random.default_rng(14)
    for _ in range(20):
        u = random_polyform(rng, 0, V, 4, density=0.3)
        assert J_op(eps_field(u)).is_zero()
        assert J_op(skew_field(u)).is_zero()


def test_div_J_vanishes():
    rng = np.random.default_rng(15)
    for _ in range(20):
        tau = random_matrix_field(rng, 3, symmetric=True)
        assert J_op(tau).div_rows().is_zero()

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import ortho_group

from blockkern.kernels import (KernelSpec, cross, evaluate, gram, gram_block, normalize_gram,
                               project_unit_sphere, self_similarity)

SPECS = [KernelSpec.rbf(0.7), KernelSpec.poly(3.0, 2), KernelSpec.elm(1.5), KernelSpec.tl1(2.1)]

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def unit_rows(rng, n, d):
    X = rng.standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


# ---- parameter validation -------------------------------------------------

@pytest.mark.parametrize("bad", [
    lambda: KernelSpec.rbf(0.0),
    lambda: KernelSpec.poly(0.0, 2),
    lambda: KernelSpec.poly(2.0, 0),
    lambda: KernelSpec("poly", a=2.0, p=1.5),
    lambda: KernelSpec.elm(-1.0),
    lambda: KernelSpec.tl1(-0.1),
    lambda: KernelSpec("gauss"),
])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_indefiniteness_flags():
    assert KernelSpec.tl1(2.0).is_indefinite(3)
    assert not KernelSpec.tl1(4.0).is_indefinite(3)
    assert not KernelSpec.tl1(0.0).is_indefinite(3)
    assert KernelSpec.poly(3.0, 1).potentially_indefinite
    assert not KernelSpec.poly(2.0, 4).potentially_indefinite
    assert not KernelSpec.rbf(1.0).is_indefinite(3)


def test_spec_dict_round_trip():
    for s in SPECS:
        assert KernelSpec.from_dict(s.to_dict()) == s


# ---- single evaluations -----------------------------------------------------

def test_rbf_self_is_one():
    x = np.array([0.3, -2.0, 5.0])
    for g in (1e-3, 1.0, 50.0):
        assert evaluate(KernelSpec.rbf(g), x, x) == 1.0


def test_rbf_hand_value():
    x, y = np.array([0.0, 0.0]), np.array([1.0, 2.0])
    assert evaluate(KernelSpec.rbf(0.5), x, y) == pytest.approx(np.exp(-2.5), rel=1e-15)


def test_tl1_self_is_rho():
    d = 4
    x = np.arange(d, dtype=float)
    assert evaluate(KernelSpec.tl1(0.7 * d), x, x) == pytest.approx(0.7 * d, rel=0, abs=0)


def test_tl1_hand_values():
    s = KernelSpec.tl1(3.0)
    assert evaluate(s, np.array([0.0, 0.0]), np.array([1.0, -1.0])) == 1.0
    assert evaluate(s, np.array([0.0, 0.0]), np.array([2.0, 2.0])) == 0.0


def test_elm_hand_value():
    # sigma_w = 1 gives offset 1.5; unit inputs give denominators sqrt(2.5 * 2.5)
    s = KernelSpec.elm(1.0)
    x, y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert evaluate(s, x, y) == pytest.approx(2 / np.pi * np.arcsin(1 / 2.5), rel=1e-14)
    assert evaluate(s, x, x) == pytest.approx(2 / np.pi * np.arcsin(2 / 2.5), rel=1e-14)


def test_poly_inner_form_matches_distance_form():
    rng = np.random.default_rng(0)
    a, p = 3.0, 2
    s = KernelSpec.poly(a, p)
    X, Y = unit_rows(rng, 100, 6), unit_rows(rng, 100, 6)
    got = np.array([evaluate(s, x, y) for x, y in zip(X, Y)])
    dist_form = (1 - np.sum((X - Y) ** 2, axis=1) / a**2) ** p
    np.testing.assert_allclose(got, dist_form, rtol=1e-12, atol=1e-15)
    q = a**2 / 2 - 1
    np.testing.assert_allclose(got, (2 / a**2) ** p * (q + np.sum(X * Y, axis=1)) ** p, rtol=1e-12)


def test_dimension_mismatch_and_nonfinite():
    s = KernelSpec.rbf(1.0)
    with pytest.raises(ValueError):
        evaluate(s, np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        evaluate(s, np.array([np.nan, 0.0]), np.zeros(2))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 3, elements=finite), arrays(np.float64, 3, elements=finite),
       st.sampled_from(range(len(SPECS))))
def test_symmetry_exact(x, y, i):
    s = SPECS[i]
    if s.kind in ("poly", "elm"):
        if np.linalg.norm(x) == 0 or np.linalg.norm(y) == 0:
            return
        x, y = x / np.linalg.norm(x), y / np.linalg.norm(y)
    assert evaluate(s, x, y) == evaluate(s, y, x)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 3, elements=finite), arrays(np.float64, 3, elements=finite))
def test_ranges(x, y):
    r = evaluate(KernelSpec.rbf(0.3), x, y)
    assert 0 <= r <= 1
    t = evaluate(KernelSpec.tl1(2.0), x, y)
    assert 0 <= t <= 2.0


def test_rotation_invariance_on_sphere():
    rng = np.random.default_rng(1)
    X, Y = unit_rows(rng, 20, 5), unit_rows(rng, 20, 5)
    R = ortho_group.rvs(5, random_state=2)
    for s in (KernelSpec.poly(3.0, 3), KernelSpec.elm(0.8)):
        a = cross(s, X, Y)
        b = cross(s, X @ R.T, Y @ R.T)
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_elm_rounding_clamped():
    # identical unit vectors push the arcsin argument to the edge without nan
    x = unit_rows(np.random.default_rng(3), 1, 7)[0]
    v = evaluate(KernelSpec.elm(1e6), x, x)
    assert np.isfinite(v) and v <= 1.0


# ---- blocks -----------------------------------------------------------------

def test_gram_block_full_and_row():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(30, 3))
    s = KernelSpec.rbf(1.0)
    K = gram_block(s, X, np.arange(30), np.arange(30))
    np.testing.assert_array_equal(np.diag(K), np.ones(30))
    row = gram_block(s, X, [0], np.arange(30))
    assert row.shape == (1, 30)
    for j in range(30):
        assert row[0, j] == evaluate(s, X[0], X[j])


def test_gram_block_transpose():
    rng = np.random.default_rng(5)
    X = unit_rows(rng, 25, 4)
    I, J = [0, 3, 7, 9], [1, 2, 24]
    for s in SPECS:
        np.testing.assert_array_equal(gram_block(s, X, I, J), gram_block(s, X, J, I).T)


def test_gram_block_index_range():
    X = np.zeros((3, 2))
    with pytest.raises(IndexError):
        gram_block(KernelSpec.rbf(1.0), X, [0, 3], [0])
    with pytest.raises(IndexError):
        gram_block(KernelSpec.rbf(1.0), X, [-1], [0])


def test_self_similarity_matches_diagonal():
    rng = np.random.default_rng(6)
    X = unit_rows(rng, 15, 3)
    for s in SPECS:
        np.testing.assert_allclose(self_similarity(s, X), np.diag(gram(s, X)), rtol=1e-14)


def test_gram_normalized_unit_diagonal():
    rng = np.random.default_rng(7)
    X = rng.uniform(size=(12, 3)) + 0.1
    K = gram(KernelSpec.poly(3.0, 2), X, normalize=True)
    np.testing.assert_allclose(np.diag(K), 1.0, rtol=0, atol=1e-15)


# ---- projection and normalization ------------------------------------------

def test_project_three_four_five():
    np.testing.assert_allclose(project_unit_sphere(np.array([[3.0, 4.0]])), [[0.6, 0.8]], rtol=1e-15)


def test_project_idempotent_and_distance_identity():
    rng = np.random.default_rng(8)
    U = project_unit_sphere(rng.standard_normal((40, 6)))
    np.testing.assert_allclose(np.linalg.norm(U, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(project_unit_sphere(U), U, atol=1e-15)
    D = np.sum((U[:, None] - U[None]) ** 2, axis=2)
    np.testing.assert_allclose(D, 2 - 2 * U @ U.T, atol=1e-12)


def test_project_zero_row_named():
    with pytest.raises(ValueError, match="row 1"):
        project_unit_sphere(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_normalize_gram_examples():
    np.testing.assert_array_equal(normalize_gram(2 * np.eye(3)), np.eye(3))
    np.testing.assert_allclose(normalize_gram(np.array([[4.0, 2.0], [2.0, 1.0]])), np.ones((2, 2)))


def test_normalize_gram_idempotent_symmetric():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((10, 4))
    K = A @ A.T + 0.1 * np.eye(10)
    N = normalize_gram(K)
    assert np.all(np.diag(N) == 1.0)
    np.testing.assert_allclose(N, N.T, atol=0)
    np.testing.assert_allclose(normalize_gram(N), N, atol=1e-14)


def test_normalize_gram_bad_diagonal_named():
    K = np.eye(3)
    K[2, 2] = 0.0
    with pytest.raises(ValueError, match="2"):
        normalize_gram(K)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcreg.tensor import (
    DimensionError, as_tensor3, fold, frobenius_norm, kron, mode_product, multi_mode_product,
    unfold, unvec, vec,
)

dims = st.tuples(*(st.integers(1, 5),) * 3)
seeds = st.integers(0, 2**32 - 1)


def _t(seed, shape):
    return np.random.default_rng(seed).standard_normal(shape)


def test_unfold_small_example():
    t = np.arange(1, 25, dtype=float).reshape((3, 4, 2), order="F")
    # Kolda layout: column index runs over the remaining modes, lower mode fastest
    assert np.array_equal(unfold(t, 1), np.arange(1, 25).reshape((3, 8), order="F"))
    assert np.array_equal(unfold(t, 2)[:, 0], [1, 4, 7, 10])
    assert np.array_equal(unfold(t, 3)[0], np.arange(1, 13))
    assert unfold(t, 2).shape == (4, 6)


def test_mode_product_matches_einsum(rng):
    t = rng.standard_normal((3, 4, 5))
    m = rng.standard_normal((2, 4))
    assert np.allclose(mode_product(t, m, 2), np.einsum("ijk,aj->iak", t, m))


def test_mode_product_dimension_error_names_mode():
    with pytest.raises(DimensionError, match="mode 2"):
        mode_product(np.zeros((2, 3, 4)), np.zeros((5, 2)), 2)


def test_bad_mode_and_order():
    with pytest.raises(ValueError):
        unfold(np.zeros((2, 2, 2)), 4)
    with pytest.raises(DimensionError):
        as_tensor3(np.zeros((2, 2)))


def test_kron_vec_small():
    a = np.array([[1.0, 2.0]])
    b = np.eye(2)
    assert np.array_equal(kron(a, b), [[1, 0, 2, 0], [0, 1, 0, 2]])
    t = np.arange(8.0).reshape((2, 2, 2), order="F")
    assert np.array_equal(vec(t), np.arange(8.0))
    assert np.array_equal(unvec(vec(t), t.shape), t)


@settings(max_examples=100, deadline=None)
@given(shape=dims, mode=st.sampled_from([1, 2, 3]), seed=seeds)
def test_fold_unfold_roundtrip(shape, mode, seed):
    t = _t(seed, shape)
    assert np.array_equal(fold(unfold(t, mode), mode, shape), t)


@settings(max_examples=100, deadline=None)
@given(shape=dims, seed=seeds, j=st.integers(1, 4))
def test_mode_product_unfolding_law(shape, seed, j):
    # unfold(T x_k M, k) = M unfold(T, k)
    t = _t(seed, shape)
    for k in (1, 2, 3):
        m = _t(seed + k, (j, shape[k - 1]))
        assert np.allclose(unfold(mode_product(t, m, k), k), m @ unfold(t, k), atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(shape=dims, seed=seeds)
def test_mode_product_composition(shape, seed):
    t = _t(seed, shape)
    a = _t(seed + 1, (3, shape[0]))
    b = _t(seed + 2, (2, 3))
    c = _t(seed + 3, (4, shape[1]))
    # same mode composes, distinct modes commute
    assert np.allclose(mode_product(mode_product(t, a, 1), b, 1), mode_product(t, b @ a, 1), atol=1e-10)
    assert np.allclose(mode_product(mode_product(t, a, 1), c, 2), mode_product(mode_product(t, c, 2), a, 1), atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(shape=dims, seed=seeds)
def test_vec_kronecker_identity(shape, seed):
    s = _t(seed, shape)
    us = [_t(seed + k, (shape[k - 1] + 1, shape[k - 1])) for k in (1, 2, 3)]
    lhs = vec(multi_mode_product(s, {1: us[0], 2: us[1], 3: us[2]}))
    rhs = kron(us[2], kron(us[1], us[0])) @ vec(s)
    assert np.allclose(lhs, rhs, atol=1e-10 * max(1.0, np.abs(rhs).max()))


@settings(max_examples=100, deadline=None)
@given(shape=dims, seed=seeds)
def test_frobenius_invariance(shape, seed):
    t = _t(seed, shape)
    q = [np.linalg.qr(_t(seed + k, (n, n)))[0] for k, n in enumerate(shape)]
    rotated = multi_mode_product(t, {1: q[0], 2: q[1], 3: q[2]})
    assert abs(frobenius_norm(rotated) - frobenius_norm(t)) <= 1e-10 * max(1.0, frobenius_norm(t))
    for k in (1, 2, 3):
        assert np.isclose(np.linalg.norm(unfold(t, k)), frobenius_norm(t))

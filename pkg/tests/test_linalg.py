import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedbnr.errors import DimensionMismatch, NotPositiveDefinite
from fedbnr.linalg import cholesky, logdet, solve_psd

from conftest import random_spd

HAND = np.array([[4.0, 2.0], [2.0, 3.0]])


def test_cholesky_hand_example():
    np.testing.assert_allclose(cholesky(HAND), [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-15)


def test_cholesky_identity():
    np.testing.assert_array_equal(cholesky(np.eye(5)), np.eye(5))


def test_cholesky_indefinite_raises():
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_cholesky_is_a_linalg_error():
    with pytest.raises(np.linalg.LinAlgError):
        cholesky(-np.eye(2))


def test_cholesky_rejects_asymmetric_and_nan():
    with pytest.raises(ValueError):
        cholesky(np.array([[2.0, 1.0], [0.0, 2.0]]))
    with pytest.raises(ValueError):
        cholesky(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_solve_identity_returns_rhs():
    b = np.array([3.0, -1.0, 2.5])
    np.testing.assert_array_equal(solve_psd(np.eye(3), b), b)


def test_solve_hand_example():
    np.testing.assert_allclose(solve_psd(cholesky(HAND), np.ones(2)), [0.125, 0.25], atol=1e-15)


def test_solve_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        solve_psd(cholesky(HAND), np.ones(3))


def test_logdet_examples():
    assert logdet(np.eye(4)) == 0.0
    assert logdet(cholesky(HAND)) == pytest.approx(math.log(8.0), abs=1e-14)
    e = math.e
    assert logdet(cholesky(np.diag([e * e, e * e]))) == pytest.approx(4.0, abs=1e-14)


@given(st.integers(1, 12), st.integers(0, 2 ** 31))
def test_cholesky_reconstructs(n, seed):
    a = random_spd(np.random.default_rng(seed), n)
    l = cholesky(a)
    assert np.allclose(np.triu(l, 1), 0.0)
    assert np.all(np.diag(l) > 0)
    np.testing.assert_allclose(l @ l.T, a, rtol=1e-10, atol=1e-10 * np.abs(a).max())


@given(st.integers(1, 10), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_solve_matches_dense(n, k, seed):
    rng = np.random.default_rng(seed)
    a = random_spd(rng, n, jitter=1.0)
    b = rng.standard_normal((n, k))
    np.testing.assert_allclose(solve_psd(cholesky(a), b), np.linalg.solve(a, b),
                               rtol=1e-8, atol=1e-10)


@given(st.integers(1, 10), st.integers(0, 2 ** 31))
def test_logdet_matches_slogdet(n, seed):
    a = random_spd(np.random.default_rng(seed), n, jitter=1.0)
    sign, ref = np.linalg.slogdet(a)
    assert sign > 0
    assert logdet(cholesky(a)) == pytest.approx(ref, rel=1e-10, abs=1e-10)

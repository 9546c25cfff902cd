import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import multivariate_normal

from fedbnr.blr import (blr_fit, blr_log_marginal, blr_predict, gp_log_marginal_dual,
                        gp_predict_dual)


def naive_fit(phi, y, sigma, lam):
    a = phi @ phi.T / sigma ** 2 + np.eye(phi.shape[0]) / lam ** 2
    return a, np.linalg.inv(a) @ phi @ y / sigma ** 2


def instance(seed, d_max=12, n_max=30):
    rng = np.random.default_rng(seed)
    d, n = int(rng.integers(1, d_max)), int(rng.integers(1, n_max))
    return (rng.standard_normal((d, n)), rng.standard_normal(n), rng.standard_normal((d, 5)),
            float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.3, 3.0)))


def test_one_point_posterior_and_prediction():
    post = blr_fit(np.ones((1, 1)), np.ones(1), 1.0, 1.0)
    np.testing.assert_allclose(post.a, [[2.0]])
    np.testing.assert_allclose(post.w_bar, [0.5])
    pred = blr_predict(post, np.ones((1, 1)))
    assert pred.mean[0] == pytest.approx(0.5)
    assert pred.variance[0] == pytest.approx(1.5)


def test_zero_data_recovers_prior():
    post = blr_fit(np.zeros((3, 0)), np.zeros(0), 0.5, 2.0)
    np.testing.assert_allclose(post.a, np.eye(3) / 4.0)
    np.testing.assert_array_equal(post.w_bar, np.zeros(3))
    phi = np.array([[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0]])
    pred = blr_predict(post, phi)
    np.testing.assert_allclose(pred.mean, 0.0)
    np.testing.assert_allclose(pred.variance, [0.25 + 4.0 * 6.0, 0.25])


def test_log_marginal_examples():
    assert blr_log_marginal(np.zeros((1, 1)), np.zeros(1), 1.0, 1.0) == pytest.approx(
        -0.5 * math.log(2 * math.pi))
    assert blr_log_marginal(np.ones((1, 1)), np.zeros(1), 1.0, 1.0) == pytest.approx(
        -0.5 * math.log(4 * math.pi))


def test_dual_prediction_hand_example():
    pred = gp_predict_dual(np.ones((1, 1)), np.ones((1, 1)), np.ones(1), np.array([2.0]), 1.0)
    assert pred.mean[0] == pytest.approx(1.0)
    assert pred.variance[0] == pytest.approx(1.5)


def test_dual_prediction_without_data():
    pred = gp_predict_dual(np.zeros((0, 0)), np.zeros((0, 2)), np.array([2.0, 3.0]),
                           np.zeros(0), 0.5)
    np.testing.assert_allclose(pred.mean, 0.0)
    np.testing.assert_allclose(pred.variance, [2.25, 3.25])


def test_interval_brackets_mean():
    pred = blr_predict(blr_fit(np.ones((1, 3)), np.arange(3.0), 1.0, 1.0), np.ones((1, 2)))
    lo, hi = pred.interval(0.95)
    assert np.all(lo < pred.mean) and np.all(pred.mean < hi)
    np.testing.assert_allclose(hi - pred.mean, 1.959963984540054 * pred.std)


@given(st.integers(0, 2 ** 31))
def test_fit_matches_dense_inverse(seed):
    phi, y, _, sigma, lam = instance(seed)
    post = blr_fit(phi, y, sigma, lam)
    a, w = naive_fit(phi, y, sigma, lam)
    np.testing.assert_allclose(post.a, a, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(post.w_bar, w, rtol=1e-8, atol=1e-10)


@given(st.integers(0, 2 ** 31))
def test_log_marginal_matches_gaussian_density(seed):
    phi, y, _, sigma, lam = instance(seed)
    cov = lam ** 2 * phi.T @ phi + sigma ** 2 * np.eye(y.size)
    ref = multivariate_normal(np.zeros(y.size), cov).logpdf(y)
    assert blr_log_marginal(phi, y, sigma, lam) == pytest.approx(ref, rel=1e-8, abs=1e-8)
    assert gp_log_marginal_dual(lam ** 2 * phi.T @ phi, y, sigma) == pytest.approx(
        ref, rel=1e-8, abs=1e-8)


@given(st.integers(0, 2 ** 31))
def test_primal_and_dual_predictions_agree(seed):
    phi, y, phi_star, sigma, lam = instance(seed)
    primal = blr_predict(blr_fit(phi, y, sigma, lam), phi_star)
    dual = gp_predict_dual(lam ** 2 * phi.T @ phi, lam ** 2 * phi.T @ phi_star,
                           lam ** 2 * np.sum(phi_star ** 2, axis=0), y, sigma)
    np.testing.assert_allclose(primal.mean, dual.mean, atol=1e-8)
    np.testing.assert_allclose(primal.variance, dual.variance, atol=1e-8)


@given(st.integers(0, 2 ** 31))
def test_predictive_variance_at_least_noise(seed):
    phi, y, phi_star, sigma, lam = instance(seed)
    pred = blr_predict(blr_fit(phi, y, sigma, lam), phi_star)
    assert np.all(pred.variance >= sigma ** 2 * (1 - 1e-12))

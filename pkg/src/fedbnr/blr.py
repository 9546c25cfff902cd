"""Exact Bayesian linear regression over a finite feature matrix.

Features are stored column-wise (``phi`` is ``D x n``). With prior
``w ~ N(0, lam^2 I)`` and noise ``N(0, sigma^2)`` the posterior precision is
``A = phi phi^T / sigma^2 + I / lam^2`` and the mean weights are
``A^{-1} phi y / sigma^2``. A is factored once per fit.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.stats import norm

from . import autodiff as ad
from . import linalg
from .errors import DimensionMismatch

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class BlrPosterior:
    a: np.ndarray
    a_chol: np.ndarray
    w_bar: np.ndarray
    sigma: float
    lam: float

    @property
    def dim(self):
        return self.w_bar.shape[0]


@dataclass(frozen=True)
class PredictiveDistribution:
    """Gaussian predictive marginals; ``variance`` includes the noise term."""

    mean: np.ndarray
    variance: np.ndarray

    @property
    def std(self):
        return np.sqrt(self.variance)

    def interval(self, level):
        """Central interval holding ``level`` of the predictive mass."""
        half = norm.ppf(0.5 + level / 2.0) * self.std
        return self.mean - half, self.mean + half


def _check(phi, y):
    phi = np.asarray(phi, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if phi.ndim != 2 or phi.shape[1] != y.shape[0]:
        raise DimensionMismatch(f"phi {phi.shape} does not match {y.shape[0]} targets")
    return phi, y


def precision(scatter, sigma, lam):
    """``A = scatter / sigma^2 + I / lam^2``."""
    d = scatter.shape[0]
    return scatter / sigma ** 2 + np.eye(d) / lam ** 2


def blr_fit(phi, y, sigma, lam):
    if sigma <= 0 or lam <= 0:
        raise ValueError("sigma and lambda must be positive")
    phi, y = _check(phi, y)
    a = precision(phi @ phi.T, sigma, lam)
    a_chol = linalg.cholesky(a)
    w_bar = linalg.solve_psd(a_chol, phi @ y) / sigma ** 2
    return BlrPosterior(a, a_chol, w_bar, float(sigma), float(lam))


def blr_predict(post, phi_star):
    phi_star = np.asarray(phi_star, dtype=np.float64)
    if phi_star.ndim == 1:
        phi_star = phi_star[:, None]
    if phi_star.shape[0] != post.dim:
        raise DimensionMismatch(f"features have {phi_star.shape[0]} rows, posterior has {post.dim}")
    mean = post.w_bar @ phi_star
    v = linalg.solve_psd(post.a_chol, phi_star)
    variance = post.sigma ** 2 + np.sum(phi_star * v, axis=0)
    return PredictiveDistribution(mean, variance)


def log_marginal(phi, y, log_sigma, log_lambda):
    """Log evidence ``log N(y; 0, lam^2 phi^T phi + sigma^2 I)`` in primal form.

    Works on ndarrays or :class:`~fedbnr.autodiff.Var` values, so the same
    expression is evaluated for reporting and differentiated for training.
    ``y`` is a plain array.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.shape[0]
    d = phi.shape[0]
    inv_s2 = ad.exp(-2.0 * log_sigma)
    inv_l2 = ad.exp(-2.0 * log_lambda)
    a = (phi @ ad.transpose(phi)) * inv_s2 + np.eye(d) * inv_l2
    l = ad.cholesky(a)
    b = phi @ y[:, None]
    x = ad.solve_psd(l, b)
    fit = ad.sum_(b * x) * inv_s2 * inv_s2 - float(y @ y) * inv_s2
    return (-0.5 * n * LOG_2PI - n * log_sigma - d * log_lambda
            - 0.5 * ad.logdet(l) + 0.5 * fit)


def blr_log_marginal(phi, y, sigma, lam):
    phi, y = _check(phi, y)
    if sigma <= 0 or lam <= 0:
        raise ValueError("sigma and lambda must be positive")
    return float(log_marginal(phi, y, math.log(sigma), math.log(lam)))


def gp_predict_dual(k_train, k_cross, k_star, y, sigma):
    """Kernel-space GP prediction.

    ``k_train`` is ``n x n``, ``k_cross`` is ``n x n_star`` (= k(X, X*)),
    ``k_star`` holds the prior variances ``k(x*, x*)``.
    """
    k_train = np.asarray(k_train, dtype=np.float64)
    k_cross = np.asarray(k_cross, dtype=np.float64)
    k_star = np.asarray(k_star, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if k_cross.ndim == 1:
        k_cross = k_cross[:, None]
    n = y.shape[0]
    if k_train.shape != (n, n) or k_cross.shape[0] != n or k_cross.shape[1] != k_star.shape[0]:
        raise DimensionMismatch("inconsistent kernel block shapes")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    l = linalg.cholesky(k_train + sigma ** 2 * np.eye(n))
    mean = k_cross.T @ linalg.solve_psd(l, y)
    reduction = np.sum(k_cross * linalg.solve_psd(l, k_cross), axis=0)
    return PredictiveDistribution(mean, k_star - reduction + sigma ** 2)


def gp_log_marginal_dual(k_train, y, sigma):
    """``log N(y; 0, K + sigma^2 I)`` evaluated in the n-dimensional space."""
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.shape[0]
    l = linalg.cholesky(np.asarray(k_train) + sigma ** 2 * np.eye(n))
    return float(-0.5 * n * LOG_2PI - 0.5 * linalg.logdet(l) - 0.5 * y @ linalg.solve_psd(l, y))

"""
Bayesian linear regression on random features
=============================================

With a finite feature map ``Phi`` (``D x n``) the Gaussian-process posterior
can be computed in the primal space from the ``D x D`` precision
``A = Phi Phi^T / sigma^2 + I / lambda^2``, or in the dual space from the
``n x n`` kernel matrix ``lambda^2 Phi^T Phi``. Both give the same answer.
"""

import numpy as np

from fedbnr import (blr_fit, blr_log_marginal, blr_predict, feature_map, gp_log_marginal_dual,
                    gp_predict_dual, rff_gaussian, synthetic_1d)

ds = synthetic_1d("sin", -5, 5, n=80, noise_sigma=0.3, seed=0)
urk = rff_gaussian(lengthscale=1.2, dim=1, m=100, seed=0)
sigma, lam = 0.3, 1.5

phi = feature_map(urk, ds.X)
post = blr_fit(phi, ds.y, sigma, lam)

grid = np.linspace(-6, 6, 7)[None, :]
phi_grid = feature_map(urk, grid)
pred = blr_predict(post, phi_grid)
lo, hi = pred.interval(0.95)
for x, m, a, b in zip(grid[0], pred.mean, lo, hi):
    print(f"x={x:5.1f}  mean {m:6.3f}  95% interval [{a:6.3f}, {b:6.3f}]  truth {2 * np.sin(x):6.3f}")

# The dual view uses only kernel evaluations.
k = lam ** 2 * phi.T @ phi
dual = gp_predict_dual(k, lam ** 2 * phi.T @ phi_grid, lam ** 2 * np.sum(phi_grid ** 2, axis=0),
                       ds.y, sigma)
print("primal vs dual: max mean gap", np.abs(pred.mean - dual.mean).max(),
      "max variance gap", np.abs(pred.variance - dual.variance).max())

# The log marginal likelihood picks hyperparameters; here it prefers the
# noise level the data were generated with.
for s in (0.1, 0.3, 1.0):
    print(f"sigma={s}: log evidence {blr_log_marginal(phi, ds.y, s, lam):9.3f}")
print("dual evidence at sigma=0.3:", gp_log_marginal_dual(k, ds.y, 0.3))

"""
Random kernels as feature expectations
======================================

A kernel is the expected inner product of random features,
``k(x, x') = E_w[g(w, x) g(w, x')]``. With ``m`` samples of ``w`` the
feature map is finite and the Monte-Carlo kernel converges to the limit.
"""

import numpy as np

from fedbnr import (closed_form, exp_kernel_construction, init_params, learned_urk,
                    pairwise_estimate, poly_kernel_construction, rff_gaussian, urk_kernel)

rng = np.random.default_rng(0)

# Three constructions with known limits: Gaussian (random Fourier features),
# exp(|x + x'|^2 / 2) and the polynomial (x^T x' + 1)^2.
cases = [
    ("gaussian", rff_gaussian(1.0, 2), dict(kind="gaussian")),
    ("exp", exp_kernel_construction(2), dict(kind="exp")),
    ("poly", poly_kernel_construction(1.0, 2, 2), dict(kind="poly", c=1.0, n=2)),
]
X = rng.uniform(-0.5, 0.5, (2, 50))
X2 = rng.uniform(-0.5, 0.5, (2, 50))

for name, config, oracle in cases:
    exact = np.array([closed_form(x=X[:, j], x2=X2[:, j], **oracle) for j in range(50)])
    for m in (100, 10_000, 100_000):
        est, se = pairwise_estimate(config, X, X2, m, seed=1)
        print(f"{name:9s} m={m:>7d}  max error {np.abs(est - exact).max():.4f}  "
              f"typical standard error {np.median(se):.4f}")

# A learned kernel: an MLP extractor, a residual shifter on w and an RFF head.
# Whatever the weights, its Gram matrix is a Gram matrix of real features,
# hence positive semi-definite.
urk = learned_urk(2, hidden=(16,), latent_dim=3, shifter=(4,), m=50)
params = init_params(urk, seed=3)
gram = urk_kernel(urk, X, X, params)
print("learned kernel: min eigenvalue", np.linalg.eigvalsh(gram).min(),
      "trace", np.trace(gram))

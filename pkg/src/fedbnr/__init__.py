"""Federated Bayesian neural regression with random kernels.

Clients learn a shared random-kernel feature map by log-marginal-likelihood
ascent, then combine per-client scatter matrices so the server recovers the
exact global Bayesian linear regression posterior over last-layer weights.
"""

from .blr import (BlrPosterior, PredictiveDistribution, blr_fit, blr_log_marginal, blr_predict,
                  gp_log_marginal_dual, gp_predict_dual, log_marginal, precision)
from .data import (Dataset, PartitionPlan, correlation_sorted_partition, load_csv, range_partition,
                   split_811, split_kd, standardize, synthetic_1d, synthetic_blr, synthetic_ccpp)
from .errors import *  # noqa: F401,F403
from .kernels import (KernelNetwork, OmegaSampler, UrkConfig, closed_form, exp_kernel_construction,
                      feature_map, init_params, learned_urk, pairwise_estimate,
                      poly_kernel_construction, rff_gaussian, sample_omegas, urk_kernel)
from .linalg import cholesky, logdet, solve_psd
from .metrics import (CalibrationCurve, brier, calibration_curve, ece, mce, rmse,
                      wilcoxon_one_tailed)
from .protocol import (ALL_MODES, ClientState, FederatedModel, RunConfig, ServerState,
                       ablation_select, federated_posterior, fit_centralized, local_posterior,
                       run_fedbnr)

__version__ = "0.1.0"

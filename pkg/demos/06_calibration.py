"""
Are the error bars honest?
==========================

Calibration compares the nominal level of central predictive intervals with
how often targets actually fall inside. ECE averages the gap over levels,
MCE takes the worst level, and the Brier score penalizes confident misses.
"""

import numpy as np

from fedbnr import (ClientState, RunConfig, ServerState, brier, calibration_curve,
                    correlation_sorted_partition, ece, feature_map, init_params, learned_urk,
                    mce, run_fedbnr, sample_omegas, synthetic_blr)

urk = learned_urk(2, hidden=(8,), latent_dim=3, m=20, seed=0)
truth = init_params(urk, seed=0, sigma=0.3)
omegas = sample_omegas(urk)
ds, _ = synthetic_blr(lambda X: feature_map(urk, X, truth, omegas), 1600, sigma=0.3, seed=0,
                      low=-2, high=2, dim=2)
train, test = ds.subset(np.arange(800)), ds.subset(np.arange(800, 1600))
clients = [ClientState(c, d.X, d.y)
           for c, d in enumerate(correlation_sorted_partition(train, 4).client_data(train))]

# Start with the wrong noise level and let federated training fix it.
for rounds in (0, 3):
    start = truth.replace(log_sigma=np.array(np.log(1.5)))
    model, _ = run_fedbnr(RunConfig(local_epochs=20, max_rounds=rounds), clients,
                          ServerState(start, omegas), urk)
    curve = calibration_curve(model.predict(test.X)[0], test.y)
    print(f"after {rounds} rounds: ECE {ece(curve):.3f}  MCE {mce(curve):.3f}  "
          f"Brier {brier(curve):.3f}")
    for level, cov in zip(curve.levels[::4], curve.coverage[::4]):
        print(f"   nominal {level:.2f} -> observed {cov:.3f}")

"""
Which aggregation matters?
==========================

Every run is named ``<phase1>+<phase2>``. Phase 1 trains the kernel
(``local`` only, ``avg`` of parameters, or ``kd`` distillation on a server
set); phase 2 fits the last layer per client (``local``) or exactly over all
clients (``global``). Here four of them run on a power-plant-like dataset
split across 10 non-i.i.d. clients, and a one-tailed Wilcoxon test compares
per-seed errors.

Rounds are capped to keep the demo short; raise ``max_rounds`` for a real
comparison.
"""

import numpy as np

from fedbnr import wilcoxon_one_tailed
from fedbnr.experiments import DatasetSpec, ExperimentConfig, PartitionSpec, RunSpec, run_experiment

config = ExperimentConfig(
    dataset=DatasetSpec(kind="synthetic_ccpp", name="ccpp", n=600),
    partition=PartitionSpec(num_clients=10),
    run=RunSpec(local_epochs=20, max_rounds=2),
    seeds=tuple(range(5)),
)

results = {}
for mode in ("avg+global", "local+global", "avg+local", "local+local"):
    records = [run_experiment(config, seed, mode) for seed in config.seeds]
    results[mode] = np.array([r["test"]["rmse"] for r in records])
    ece = np.mean([r["test"]["ece"] for r in records])
    print(f"{mode:13s} rmse {results[mode].mean():.3f} +/- "
          f"{results[mode].std(ddof=1) / np.sqrt(len(config.seeds)):.3f}   ece {ece:.3f}")

test = wilcoxon_one_tailed(results["local+local"], results["avg+global"])
print(f"\nlocal+local worse than avg+global? W+={test.statistic}, p={test.p_value:.4f} "
      f"({test.method}, n={test.n_effective})")

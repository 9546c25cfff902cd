"""Experiment recipes: config-driven runs, the two-client synthetic study and
the kernel Monte-Carlo check.

Config files are JSON. Every section is optional and unknown keys are
rejected with their dotted path::

    {
      "dataset":   {"kind": "synthetic_ccpp", "n": 1000},
      "partition": {"kind": "correlation", "num_clients": 10},
      "kernel":    {"hidden": [32], "latent_dim": 5, "shifter": [5], "m": 50},
      "run":       {"mode": "avg+global", "local_epochs": 50, "max_rounds": 100},
      "seeds": [0, 1, 2],
      "ablation_sweep": false,
      "output_dir": "results"
    }

``dataset.kind`` is ``csv`` (with ``path`` and ``target``),
``synthetic_1d`` or ``synthetic_ccpp``; ``partition.kind`` is
``correlation`` or ``range`` (with ``boundaries``).
"""

from concurrent.futures import ThreadPoolExecutor
import csv
import dataclasses
from dataclasses import dataclass, field
import hashlib
import json
import math
import os
from pathlib import Path
import time

import numpy as np

from . import data as datasets
from .blr import blr_predict
from .errors import ConfigError
from .kernels import (KernelNetwork, OmegaSampler, UrkConfig, closed_form, exp_kernel_construction,
                      feature_map, init_params, learned_urk, pairwise_estimate,
                      poly_kernel_construction, rff_gaussian, sample_omegas, urk_kernel)
from .metrics import brier, calibration_curve, ece, mce, rmse
from .protocol import (ALL_MODES, ClientState, RunConfig, ServerState, ablation_select,
                       federated_posterior, fit_centralized, local_posterior, run_fedbnr)

# knowledge distillation weight per (dataset, clients) from the UCI hyperparameter table
KD_ALPHA = {
    ("skillcraft", 10): 10.0, ("skillcraft", 100): 2.0,
    ("sml", 10): 1.0, ("sml", 100): 0.5,
    ("parkinsons", 10): 5.0, ("parkinsons", 100): 2.0,
    ("bike", 10): 5.0, ("bike", 100): 0.5,
    ("ccpp", 10): 5.0, ("ccpp", 100): 5.0,
}


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synthetic_1d"
    name: str = ""
    path: str = ""
    target: str = ""
    function: str = "sin"
    low: float = -5.0
    high: float = 5.0
    n: int = 200
    noise: float = 0.5
    subsample: int = 0


@dataclass(frozen=True)
class PartitionSpec:
    kind: str = "correlation"
    num_clients: int = 10
    boundaries: tuple = (0.0,)


@dataclass(frozen=True)
class KernelSpec:
    hidden: tuple = (32,)
    latent_dim: int = 5
    shifter: tuple = (5,)
    m: int = 50
    activation: str = "tanh"
    replicate: str = "none"
    replicate_scale: float = 0.1
    normalization: str = "sqrt_m_minus_1"


@dataclass(frozen=True)
class RunSpec:
    mode: str = "avg+global"
    local_epochs: int = 50
    max_rounds: int = 100
    lr: float = 1e-3
    kd_lr: float = 1e-3
    kd_epochs: int = 10
    alpha: float = None
    patience: int = 5
    kd_fraction: float = 0.8
    sigma0: float = 1.0
    lambda0: float = 1.0
    weighted_avg: bool = False
    restore_best: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    run: RunSpec = field(default_factory=RunSpec)
    seeds: tuple = (0,)
    ablation_sweep: bool = False
    output_dir: str = "results"

    def to_dict(self):
        return dataclasses.asdict(self)

    def config_hash(self):
        """sha256 of the canonical JSON, ignoring where outputs go."""
        payload = self.to_dict()
        payload.pop("output_dir")
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def modes(self):
        return ALL_MODES if self.ablation_sweep else (ablation_select(self.run.mode).name,)


SECTIONS = {"dataset": DatasetSpec, "partition": PartitionSpec, "kernel": KernelSpec,
            "run": RunSpec}


def _coerce(value, default, path):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, tuple) or (default is None and isinstance(value, list)):
        if value is None:
            return None
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(value)
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if isinstance(value, int) and not isinstance(value, bool):
            return str(value)
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def _section(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in names:
            raise ConfigError(f"{path}.{key}", "unknown key")
    values = {k: _coerce(v, getattr(defaults, k), f"{path}.{k}") for k, v in raw.items()}
    return cls(**values)


def parse_config(raw):
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    allowed = set(SECTIONS) | {"seeds", "ablation_sweep", "output_dir"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(key, "unknown key")
    kwargs = {name: _section(cls, raw.get(name, {}), name) for name, cls in SECTIONS.items()}
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(
            isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds", "expected a non-empty list of integers")
    kwargs["seeds"] = tuple(seeds)
    kwargs["ablation_sweep"] = _coerce(raw.get("ablation_sweep", False), False, "ablation_sweep")
    kwargs["output_dir"] = _coerce(raw.get("output_dir", "results"), "results", "output_dir")
    config = ExperimentConfig(**kwargs)
    validate(config)
    return config


def validate(config):
    ds = config.dataset
    if ds.kind not in ("csv", "synthetic_1d", "synthetic_ccpp"):
        raise ConfigError("dataset.kind", f"unknown dataset kind {ds.kind!r}")
    if ds.kind == "csv" and (not ds.path or ds.target == ""):
        raise ConfigError("dataset.path", "csv datasets need path and target")
    if ds.kind == "synthetic_1d" and ds.function not in datasets.FUNCTIONS:
        raise ConfigError("dataset.function", f"unknown function {ds.function!r}")
    if ds.n < 10:
        raise ConfigError("dataset.n", "need at least 10 rows")
    part = config.partition
    if part.kind not in ("correlation", "range"):
        raise ConfigError("partition.kind", f"unknown partition kind {part.kind!r}")
    if part.num_clients < 1:
        raise ConfigError("partition.num_clients", "need at least one client")
    try:
        ablation_select(config.run.mode)
    except ValueError as exc:
        raise ConfigError("run.mode", str(exc)) from None
    if config.run.patience < 1:
        raise ConfigError("run.patience", "must be >= 1")
    if config.run.alpha is not None and config.run.alpha < 0:
        raise ConfigError("run.alpha", "must be >= 0")
    if not 0 < config.run.kd_fraction < 1:
        raise ConfigError("run.kd_fraction", "must lie in (0, 1)")
    if config.kernel.m < 2:
        raise ConfigError("kernel.m", "need at least two samples")


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(raw)


# -- single experiment ---------------------------------------------------

def load_dataset(spec, seed):
    if spec.kind == "csv":
        ds = datasets.load_csv(spec.path, spec.target)
    elif spec.kind == "synthetic_ccpp":
        ds = datasets.synthetic_ccpp(spec.n, seed=seed)
    else:
        ds = datasets.synthetic_1d(spec.function, spec.low, spec.high, spec.n, spec.noise,
                                   seed=seed)
    if spec.subsample and spec.subsample < ds.n:
        idx = np.sort(np.random.default_rng(seed).choice(ds.n, spec.subsample, replace=False))
        ds = ds.subset(idx)
    return ds


def kd_alpha(config):
    if config.run.alpha is not None:
        return config.run.alpha
    key = (config.dataset.name.lower(), config.partition.num_clients)
    return KD_ALPHA.get(key, 1.0)


def head_metrics(model, X, y, y_std):
    preds = model.predict(X)
    curves = [calibration_curve(p, y) for p in preds]
    return {
        "rmse": float(np.mean([rmse(p.mean, y) for p in preds])) * y_std,
        "ece": float(np.mean([ece(c) for c in curves])),
        "mce": float(np.mean([mce(c) for c in curves])),
        "brier": float(np.mean([brier(c) for c in curves])),
    }


def run_experiment(config, seed, mode=None):
    """One (config, seed, mode) run; returns the JSON-ready record."""
    wiring = ablation_select(mode or config.run.mode)
    ds = load_dataset(config.dataset, seed)
    train, test, valid = datasets.split_811(ds, seed)
    train, test, valid = datasets.standardize(train, test, valid)
    if config.partition.kind == "range":
        plan = datasets.range_partition(train, config.partition.boundaries)
    else:
        plan = datasets.correlation_sorted_partition(train, config.partition.num_clients, seed)
    kd = None
    if wiring.phase1 == "kd":
        kd, valid = datasets.split_kd(valid, config.run.kd_fraction, seed)

    k = config.kernel
    urk = learned_urk(train.p, hidden=k.hidden, latent_dim=k.latent_dim, shifter=k.shifter,
                      m=k.m, activation=k.activation, replicate=k.replicate,
                      replicate_scale=k.replicate_scale, normalization=k.normalization,
                      seed=seed)
    params = init_params(urk, seed=seed, sigma=config.run.sigma0, lam=config.run.lambda0)
    omegas = sample_omegas(urk)
    clients = [ClientState(c, part.X, part.y)
               for c, part in enumerate(plan.client_data(train))]
    server = ServerState(params, omegas,
                         kd.X if kd is not None else None, kd.y if kd is not None else None)
    r = config.run
    run_config = RunConfig(mode=wiring.name, local_epochs=r.local_epochs, max_rounds=r.max_rounds,
                           lr=r.lr, kd_lr=r.kd_lr, kd_epochs=r.kd_epochs, alpha=kd_alpha(config),
                           patience=r.patience, weighted_avg=r.weighted_avg,
                           restore_best=r.restore_best)
    model, round_log = run_fedbnr(run_config, clients, server, urk,
                                  valid=(valid.X, valid.y), test=(test.X, test.y))
    scale = train.y_std
    rounds = [{key: (val * scale if key.endswith("rmse") else val) for key, val in e.items()}
              for e in round_log]
    return {
        "config_hash": config.config_hash(),
        "seed": seed,
        "mode": wiring.name,
        "sizes": {"train": train.n, "test": test.n, "valid": valid.n,
                  "kd": kd.n if kd is not None else 0, "clients": plan.num_clients},
        "rounds": rounds,
        "test": head_metrics(model, test.X, test.y, scale),
    }


def dump_json(obj, path):
    text = json.dumps(obj, sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _sem(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float("nan")
    return float(values.std(ddof=1) / math.sqrt(values.size))


SUMMARY_METRICS = ("rmse", "ece", "mce", "brier")


def summarize(records):
    """Mean and standard error of the mean over seeds, one row per mode."""
    rows = []
    for mode in dict.fromkeys(r["mode"] for r in records):
        group = [r for r in records if r["mode"] == mode]
        row = {"mode": mode, "num_seeds": len(group), "config_hash": group[0]["config_hash"]}
        for metric in SUMMARY_METRICS:
            vals = [r["test"][metric] for r in group]
            row[f"{metric}_mean"] = float(np.mean(vals))
            row[f"{metric}_sem"] = _sem(vals)
        rows.append(row)
    return rows


def write_csv(rows, path):
    if not rows:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def cmd_run(config, output_dir=None):
    """Run every (mode, seed) of ``config`` and write records and summary.

    Writes ``<mode>_seed<k>.json`` per run, ``summary.csv`` with mean and SEM
    per mode, and ``timing.csv`` with wall-clock seconds (kept out of the
    records so they stay byte-reproducible).
    """
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(mode, seed) for mode in config.modes() for seed in config.seeds]
    threads = max(1, int(os.environ.get("FEDBNR_THREADS", "1")))

    def job(item):
        mode, seed = item
        start = time.perf_counter()
        record = run_experiment(config, seed, mode)
        dump_json(record, out / f"{mode.replace('+', '_')}_seed{seed}.json")
        return record, time.perf_counter() - start

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(j) for j in jobs]
    records = [r for r, _ in results]
    rows = summarize(records)
    write_csv(rows, out / "summary.csv")
    write_csv([{"mode": r["mode"], "seed": r["seed"], "seconds": t} for r, t in results],
              out / "timing.csv")
    return records, rows


# -- two-client synthetic study -------------------------------------------

FIG2_SIZES = (10, 20, 30, 50, 75, 100, 150, 200)


def synthetic_fig2(out_dir=None, seed=0, function="sin", central_steps=300, lr=1e-3,
                   sizes=FIG2_SIZES, grid_points=401):
    """Two non-overlapping clients on ``[-5, 0)`` and ``[0, 5]``.

    The kernel is learned centrally first and then frozen, so FedBNR,
    the centralized model and the local-only ablation differ only in which
    data reach the last layer. Also measures how each model's error on a
    noisy held-out test set over ``[-5, 5]`` changes as a new client with
    ``size`` points joins, for a new client drawn from ``[-5, 5]`` and one
    from ``[5, 15]``. Columns ending in ``_truth`` score the same models
    against the noise-free function on the grid.

    Returns a summary dict; with ``out_dir`` writes ``fig2_prediction.csv``,
    ``fig2_new_client.csv`` and ``fig2_summary.json``.
    """
    f = datasets.FUNCTIONS[function]
    ds = datasets.synthetic_1d(function, -5.0, 5.0, 200, 0.5, seed=seed)
    urk = learned_urk(1, hidden=(32,), latent_dim=5, shifter=(5,), m=50, seed=seed)
    omegas = sample_omegas(urk)
    params0 = init_params(urk, seed=seed, sigma=0.5, lam=1.0)
    params, central = fit_centralized(ds.X, ds.y, urk, omegas, params0, steps=central_steps, lr=lr)

    plan = datasets.range_partition(ds, [0.0])
    clients = [ClientState(c, part.X, part.y) for c, part in enumerate(plan.client_data(ds))]
    frozen = RunConfig(mode="avg+global", max_rounds=0)
    fed, _ = run_fedbnr(frozen, clients, ServerState(params, omegas), urk)
    local, _ = run_fedbnr(RunConfig(mode="local+local", max_rounds=0), clients,
                          ServerState(params, omegas), urk)

    grid = np.linspace(-5.0, 5.0, grid_points)
    truth = f(grid)
    pred = fed.predict(grid[None, :])[0]
    central_pred = blr_predict(central, feature_map(urk, grid[None, :], params, omegas))
    lower, upper = pred.interval(0.95)
    summary = {
        "seed": seed,
        "function": function,
        "sigma": math.exp(float(params["log_sigma"])),
        "lambda": math.exp(float(params["log_lambda"])),
        "fedbnr_rmse": rmse(pred.mean, truth),
        "central_rmse": rmse(central_pred.mean, truth),
        "local_rmse_mean": float(np.mean([rmse(p.mean, truth)
                                          for p in local.predict(grid[None, :])])),
        "client_sizes": [c.n for c in clients],
    }

    rng = np.random.default_rng(seed + 1)
    x_test = rng.uniform(-5.0, 5.0, 1000)
    y_test = f(x_test) + 0.5 * rng.standard_normal(x_test.size)
    phi_test = feature_map(urk, x_test[None, :], params, omegas)
    phi_grid = feature_map(urk, grid[None, :], params, omegas)
    curves = []
    for label, (low, high) in (("[-5,5]", (-5.0, 5.0)), ("[5,15]", (5.0, 15.0))):
        x_new = rng.uniform(low, high, max(sizes))
        y_new = f(x_new) + 0.5 * rng.standard_normal(x_new.size)
        for size in sizes:
            newcomer = ClientState(len(clients), x_new[None, :size], y_new[:size])
            post = federated_posterior(clients + [newcomer], params, urk, omegas)
            alone = local_posterior(newcomer, params, urk, omegas)
            curves.append({
                "client_range": label, "size": size,
                "fedbnr_rmse": rmse(blr_predict(post, phi_test).mean, y_test),
                "local_rmse": rmse(blr_predict(alone, phi_test).mean, y_test),
                "fedbnr_rmse_truth": rmse(blr_predict(post, phi_grid).mean, truth),
                "local_rmse_truth": rmse(blr_predict(alone, phi_grid).mean, truth),
            })
    summary["new_client"] = curves

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv([{"x": float(x), "truth": float(t), "mean": float(m), "lower95": float(lo),
                    "upper95": float(up)}
                   for x, t, m, lo, up in zip(grid, truth, pred.mean, lower, upper)],
                  out / "fig2_prediction.csv")
        write_csv(curves, out / "fig2_new_client.csv")
        dump_json(summary, out / "fig2_summary.json")
    return summary


# -- kernel Monte-Carlo check --------------------------------------------

def random_urk_config(rng, max_dim=4):
    """A random but valid URK architecture, for property checks."""
    p = int(rng.integers(1, max_dim + 1))
    combine = str(rng.choice(["rff", "inner", "power"]))
    m = int(rng.integers(2, 16))
    normalization = str(rng.choice(["sqrt_m", "sqrt_m_minus_1"]))
    seed = int(rng.integers(0, 2 ** 31))
    if combine == "power":
        return poly_kernel_construction(float(rng.uniform(0, 2)), int(rng.integers(1, 4)), p,
                                        m=m, seed=seed)
    latent = int(rng.integers(1, 5))
    extractor = tuple(int(w) for w in rng.integers(2, 8, size=int(rng.integers(0, 3))))
    if not extractor:
        latent = p
    shifter = None if rng.random() < 0.4 else (int(rng.integers(2, 6)),)
    network = KernelNetwork(
        input_dim=p, latent_dim=latent, extractor=extractor, shifter=shifter, combine=combine,
        activation=str(rng.choice(["tanh", "relu", "sin"])),
        nonlinearity=str(rng.choice(["exp", "cos", "tanh", "relu", "identity"])),
        replicate=str(rng.choice(["none", "multiply", "add"])),
        replicate_scale=float(rng.uniform(0.05, 0.5)))
    return UrkConfig(OmegaSampler("normal", dim=latent, scale=float(rng.uniform(0.3, 2)),
                                  seed=seed), network, m=m, normalization=normalization)


def psd_check(num_configs=50, seed=0, max_points=30):
    """Smallest eigenvalue over trace of random URK Gram matrices."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(num_configs):
        config = random_urk_config(rng)
        n = int(rng.integers(1, max_points + 1))
        X = rng.uniform(-1, 1, (config.network.input_dim, n))
        params = init_params(config, seed=int(rng.integers(0, 2 ** 31)))
        gram = urk_kernel(config, X, X, params)
        trace = float(np.trace(gram))
        ratio = float(np.linalg.eigvalsh(gram).min()) / trace if trace > 0 else 0.0
        worst = min(worst, ratio)
    return worst


KERNEL_CASES = {
    "rff": dict(dim=3, low=-1.0, high=1.0),
    "exp": dict(dim=2, low=-0.5, high=0.5),
    "poly": dict(dim=2, low=-1.0, high=1.0),
}


def _case(name, dim, m):
    if name == "rff":
        return rff_gaussian(1.0, dim, m=m), dict(kind="gaussian", lengthscale=1.0)
    if name == "exp":
        return exp_kernel_construction(dim, m=m), dict(kind="exp")
    return poly_kernel_construction(1.0, 2, dim, m=m), dict(kind="poly", c=1.0, n=2)


def kernel_check(m_values=(100, 10_000, 1_000_000), n_pairs=100, seed=0):
    """Monte-Carlo error of the rff / exp / poly constructions against their
    closed forms, plus PSD and unit-diagonal checks."""
    rng = np.random.default_rng(seed)
    report = {"constructions": {}}
    for name, spec in KERNEL_CASES.items():
        X = rng.uniform(spec["low"], spec["high"], (spec["dim"], n_pairs))
        X2 = rng.uniform(spec["low"], spec["high"], (spec["dim"], n_pairs))
        config, oracle = _case(name, spec["dim"], 2)
        kind = oracle.pop("kind")
        exact = np.array([closed_form(kind, X[:, j], X2[:, j], **oracle) for j in range(n_pairs)])
        rows = []
        for m in m_values:
            est, se = pairwise_estimate(config, X, X2, m, seed=seed + 1)
            err = np.abs(est - exact)
            rows.append({"m": int(m), "max_abs_error": float(err.max()),
                         "max_se_ratio": float(np.max(err / np.maximum(se, 1e-300)))})
        report["constructions"][name] = rows
    report["psd_min_eig_over_trace"] = psd_check(seed=seed)
    diag_config = rff_gaussian(1.0, 3, m=1000, seed=seed)
    xs = rng.uniform(-1, 1, (3, 20))
    diag = np.diag(urk_kernel(diag_config, xs, xs))
    report["rff_diagonal_max_deviation"] = float(np.max(np.abs(diag - 1.0)))
    return report


def format_kernel_report(report):
    lines = []
    for name, rows in report["constructions"].items():
        errors = [r["max_abs_error"] for r in rows]
        trend = "decreasing" if all(a > b for a, b in zip(errors, errors[1:])) else "NOT decreasing"
        for r in rows:
            lines.append(f"{name:5s} m={r['m']:>9d}  max|err|={r['max_abs_error']:.3e}  "
                         f"max|err|/se={r['max_se_ratio']:.2f}")
        lines.append(f"{name:5s} error {trend} in m")
    lines.append(f"psd   min eig / trace = {report['psd_min_eig_over_trace']:.3e} "
                 f"({'ok' if report['psd_min_eig_over_trace'] >= -1e-9 else 'FAIL'})")
    lines.append(f"rff   diagonal = {1.0 + report['rff_diagonal_max_deviation']:.15f} "
                 f"(max deviation {report['rff_diagonal_max_deviation']:.1e})")
    return "\n".join(lines)

"""Two-phase federated Bayesian neural regression.

Phase 1 learns the kernel network: every client takes full-batch gradient
steps on its local log marginal likelihood, then the server aggregates by
parameter averaging (``avg``), by knowledge distillation on a held-out set
(``kd``), or not at all (``local``). Phase 2 fixes the kernel and computes
the last linear layer exactly from per-client scatter matrices
``Phi_c Phi_c^T`` and intermediate weights, so the global posterior is the
one a centralized fit on the pooled data would give.

Ablations are named ``<phase1>+<phase2>`` with phase 2 in ``global`` or
``local``; ``avg+global`` is the default protocol.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
import os

import numpy as np

from . import autodiff as ad
from . import linalg
from .blr import BlrPosterior, blr_fit, blr_predict, log_marginal, precision
from .errors import LayoutMismatch, NoKdData, NonFiniteLoss, NotPositiveDefinite, UnknownMode
from .kernels import feature_map, network_features
from .messages import (ClientModelUpdate, GlobalWeights, IntermediateWeights, ModelBroadcast,
                       PrecisionBroadcast, ScatterMatrix, roundtrip)
from .metrics import rmse

log = logging.getLogger(__name__)

PHASE1_MODES = ("local", "avg", "kd")
PHASE2_MODES = ("local", "global")
ALIASES = {"fedbnr": "avg+global", "fedbnr-kd": "kd+global"}


@dataclass(frozen=True)
class Wiring:
    phase1: str
    phase2: str

    @property
    def name(self):
        return f"{self.phase1}+{self.phase2}"


def ablation_select(mode):
    """Parse ``"<phase1>+<phase2>"`` (or an alias) into a :class:`Wiring`."""
    mode = ALIASES.get(str(mode).lower(), str(mode).lower())
    try:
        phase1, phase2 = mode.split("+")
    except ValueError:
        raise UnknownMode(f"mode {mode!r} is not of the form phase1+phase2") from None
    if phase1 not in PHASE1_MODES or phase2 not in PHASE2_MODES:
        raise UnknownMode(f"unknown mode {mode!r}")
    return Wiring(phase1, phase2)


ALL_MODES = tuple(f"{a}+{b}" for a in PHASE1_MODES for b in PHASE2_MODES)


@dataclass
class ClientState:
    cid: int
    X: np.ndarray
    y: np.ndarray
    params: ad.ParamVector = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim != 2 or self.X.shape[1] != self.y.shape[0] or self.y.shape[0] < 1:
            raise ValueError(f"client {self.cid} needs p x n inputs and n >= 1 targets")

    @property
    def n(self):
        return self.y.shape[0]


@dataclass
class ServerState:
    params: ad.ParamVector
    omegas: np.ndarray
    kd_X: np.ndarray = None
    kd_y: np.ndarray = None
    round: int = 0


@dataclass(frozen=True)
class RunConfig:
    mode: str = "avg+global"
    local_epochs: int = 50
    max_rounds: int = 100
    lr: float = 1e-3
    kd_lr: float = 1e-3
    kd_epochs: int = 10
    alpha: float = 1.0
    patience: int = 5
    weighted_avg: bool = False
    restore_best: bool = True
    backtrack: bool = True
    threads: int = None

    def __post_init__(self):
        ablation_select(self.mode)
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.local_epochs < 0 or self.max_rounds < 0 or self.kd_epochs < 0:
            raise ValueError("epoch and round counts must be non-negative")


# -- objectives and optimizer -------------------------------------------

def lml_objective(urk, omegas, X, y):
    """Exact local log marginal likelihood as a function of parameter blocks."""
    def objective(blocks):
        phi = network_features(urk, blocks, omegas, X) / urk.normalizer
        return log_marginal(phi, y, blocks["log_sigma"], blocks["log_lambda"])
    return objective


def _value_or_nan(objective, params):
    try:
        value = ad.evaluate(objective, params)
    except (NotPositiveDefinite, FloatingPointError, ValueError):
        return math.nan
    return value


def gradient_steps(objective, params, lr, steps, maximize=True, backtrack=True,
                   max_halvings=30):
    """Full-batch gradient ascent (or descent) with optional step halving.

    With ``backtrack`` each step starts at ``lr`` and is halved until the
    objective does not get worse; a step that cannot be made non-worsening
    ends the loop early. Without it, plain steps are taken and a non-finite
    objective raises :class:`NonFiniteLoss`.
    """
    sign = 1.0 if maximize else -1.0
    for _ in range(steps):
        with np.errstate(all="ignore"):
            value, grad = ad.evaluate_with_gradient(objective, params)
        if not math.isfinite(value) or not np.all(np.isfinite(grad.data)):
            raise NonFiniteLoss(f"objective is {value}; learning rate {lr} diverged")
        step = lr
        for _ in range(max_halvings + 1):
            candidate = params.with_data(params.data + sign * step * grad.data)
            with np.errstate(all="ignore"):
                cand_value = _value_or_nan(objective, candidate)
            if not backtrack:
                if not math.isfinite(cand_value):
                    raise NonFiniteLoss(f"objective became {cand_value} at lr {lr}")
                params = candidate
                break
            if math.isfinite(cand_value) and sign * (cand_value - value) >= 0.0:
                params = candidate
                break
            step *= 0.5
        else:
            break
    return params


# -- phase 1 ------------------------------------------------------------

def local_update(client, global_params, urk, omegas, epochs, lr, backtrack=True):
    """Start from the broadcast parameters and ascend the local LML."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    objective = lml_objective(urk, omegas, client.X, client.y)
    params = gradient_steps(objective, global_params, lr, epochs, backtrack=backtrack)
    return ClientModelUpdate(params, client.n)


def fedavg_aggregate(updates, weighted=False):
    """Elementwise mean of the flat parameter vectors.

    ``log_sigma`` and ``log_lambda`` are averaged in log space. The mean is
    taken as an offset from the first update so identical inputs come back
    bitwise unchanged.
    """
    if not updates:
        raise ValueError("need at least one client update")
    ref = updates[0].params
    for u in updates[1:]:
        if not u.params.same_layout(ref):
            raise LayoutMismatch("client updates disagree on parameter layout")
    if weighted:
        w = np.array([u.n_samples for u in updates], dtype=float)
        w = w / w.sum()
    else:
        w = np.full(len(updates), 1.0 / len(updates))
    offsets = np.stack([u.params.data - ref.data for u in updates])
    return ref.with_data(ref.data + w @ offsets)


def kd_objective(server, updates, urk, alpha):
    """``-LML(kd set) + alpha * mean((K_global - mean_c K_c)^2)`` over blocks."""
    if server.kd_X is None or server.kd_y is None or np.size(server.kd_y) == 0:
        raise NoKdData("knowledge distillation needs a server-side dataset")
    X, y = np.asarray(server.kd_X), np.asarray(server.kd_y).ravel()
    target = np.zeros((y.shape[0], y.shape[0]))
    for u in updates:
        phi_c = feature_map(urk, X, u.params, server.omegas)
        target += phi_c.T @ phi_c
    target /= max(len(updates), 1)

    def loss(blocks):
        phi = network_features(urk, blocks, server.omegas, X) / urk.normalizer
        out = -log_marginal(phi, y, blocks["log_sigma"], blocks["log_lambda"])
        if alpha:
            diff = ad.transpose(phi) @ phi - target
            out = out + alpha * ad.mean(diff * diff)
        return out

    return loss


def kd_aggregate(server, updates, urk, alpha, kd_epochs, lr, backtrack=True):
    """Distill the client kernels into the global kernel on the server's KD
    set, descending from the current global parameters."""
    loss = kd_objective(server, updates, urk, alpha)
    return gradient_steps(loss, server.params, lr, kd_epochs, maximize=False,
                          backtrack=backtrack)


# -- phase 2 ------------------------------------------------------------

def phase2_scatter(client, params, urk, omegas):
    phi = feature_map(urk, client.X, params, omegas)
    return ScatterMatrix(phi @ phi.T)


def aggregate_precision(scatters, sigma, lam, dim):
    total = np.zeros((dim, dim))
    for s in scatters:
        if s.matrix.shape != (dim, dim):
            raise ValueError(f"scatter of shape {s.matrix.shape}, expected {(dim, dim)}")
        total = total + s.matrix
    return precision(total, sigma, lam)


def phase2_assemble(scatters, sigma, lam, dim):
    """Global precision ``A``, broadcast as its Cholesky factor."""
    return PrecisionBroadcast(linalg.cholesky(aggregate_precision(scatters, sigma, lam, dim)))


def phase2_client_weights(client, params, urk, omegas, precision_msg, sigma):
    phi = feature_map(urk, client.X, params, omegas)
    return IntermediateWeights(linalg.solve_psd(precision_msg.chol, phi @ client.y) / sigma ** 2)


def _shared_hyper(param_list):
    log_s = np.mean([float(p["log_sigma"]) for p in param_list])
    log_l = np.mean([float(p["log_lambda"]) for p in param_list])
    return math.exp(log_s), math.exp(log_l)


def federated_posterior(clients, params, urk, omegas, client_params=None):
    """Run phase 2 through the message layer and return the global posterior.

    ``client_params`` (one per client) lets each client featurize with its
    own kernel, as in the ``local+global`` ablation; ``sigma`` and
    ``lambda`` are then the log-space means of the clients' values.
    """
    if client_params is None:
        sigma, lam = math.exp(float(params["log_sigma"])), math.exp(float(params["log_lambda"]))
        broadcast = roundtrip(ModelBroadcast(params, omegas), template=params)
        client_params = [broadcast.params] * len(clients)
        omegas = broadcast.omegas
    else:
        sigma, lam = _shared_hyper(client_params)
    dim = urk.feature_dim
    scatters = [roundtrip(phase2_scatter(c, p, urk, omegas))
                for c, p in zip(clients, client_params)]
    a = aggregate_precision(scatters, sigma, lam, dim)
    msg = roundtrip(PrecisionBroadcast(linalg.cholesky(a)))
    w_bar = np.zeros(dim)
    for c, p in zip(clients, client_params):
        w_bar = w_bar + roundtrip(phase2_client_weights(c, p, urk, omegas, msg, sigma)).vector
    w_bar = roundtrip(GlobalWeights(w_bar)).vector
    return BlrPosterior(a, msg.chol, w_bar, sigma, lam)


def local_posterior(client, params, urk, omegas):
    sigma, lam = math.exp(float(params["log_sigma"])), math.exp(float(params["log_lambda"]))
    return blr_fit(feature_map(urk, client.X, params, omegas), client.y, sigma, lam)


# -- orchestration ------------------------------------------------------

@dataclass
class FederatedModel:
    """Predictive heads produced by a run.

    Each head is ``(params, posterior)``. Protocols with a global kernel and
    a global last layer have exactly one head; the others keep one per
    client and report metrics averaged over heads.
    """

    urk: object
    omegas: np.ndarray
    heads: list
    wiring: Wiring

    @property
    def posterior(self):
        if self.wiring.phase2 == "global":
            return self.heads[0][1]
        return None

    @property
    def params(self):
        return self.heads[0][0]

    def predict(self, X):
        return [blr_predict(post, feature_map(self.urk, X, params, self.omegas))
                for params, post in self.heads]

    def rmse(self, X, y):
        return float(np.mean([rmse(pred.mean, y) for pred in self.predict(X)]))


def _threads(config):
    if config.threads is not None:
        return max(1, int(config.threads))
    return max(1, int(os.environ.get("FEDBNR_THREADS", "1")))


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def build_model(wiring, clients, global_params, client_params, urk, omegas):
    if wiring.phase1 == "local":
        kernels = client_params
    else:
        kernels = [global_params] * len(clients)
    if wiring.phase2 == "global":
        if wiring.phase1 == "local":
            post = federated_posterior(clients, None, urk, omegas, client_params=kernels)
            heads = [(p, post) for p in kernels]
        else:
            heads = [(global_params, federated_posterior(clients, global_params, urk, omegas))]
    else:
        heads = [(p, local_posterior(c, p, urk, omegas)) for c, p in zip(clients, kernels)]
    return FederatedModel(urk, omegas, heads, wiring)


def run_fedbnr(config, clients, server, urk, valid=None, test=None):
    """Algorithm driver: phase 1 rounds with early stopping, then phase 2.

    Returns ``(model, round_log)``. Each log entry records the round index
    and validation (and, when given, test) RMSE of the model assembled at
    the end of that round; round 0 is the initialized kernel. Training
    stops once validation RMSE has not improved for ``patience`` rounds,
    and with ``restore_best`` the best-validated round is returned.
    """
    wiring = ablation_select(config.mode)
    if wiring.phase1 == "kd" and (server.kd_X is None or np.size(server.kd_y) == 0):
        raise NoKdData("kd aggregation requires a knowledge distillation set")
    if not clients:
        raise ValueError("need at least one client")
    threads = _threads(config)
    omegas = server.omegas
    client_params = [c.params if c.params is not None else server.params for c in clients]
    if wiring.phase1 != "local":
        client_params = [server.params] * len(clients)

    def evaluate(t, model):
        entry = {"round": t}
        if valid is not None:
            entry["valid_rmse"] = model.rmse(*valid)
        if test is not None:
            entry["test_rmse"] = model.rmse(*test)
        return entry

    model = build_model(wiring, clients, server.params, client_params, urk, omegas)
    round_log = [evaluate(0, model)]
    best_model, best_score, stale = model, round_log[0].get("valid_rmse", math.inf), 0

    for t in range(1, config.max_rounds + 1):
        starts = client_params if wiring.phase1 == "local" else [server.params] * len(clients)
        if config.local_epochs > 0:
            updates = _map(
                lambda cs: local_update(cs[0], cs[1], urk, omegas, config.local_epochs,
                                        config.lr, config.backtrack),
                list(zip(clients, starts)), threads)
        else:
            updates = [ClientModelUpdate(p, c.n) for c, p in zip(clients, starts)]
        updates = [roundtrip(u, template=server.params) for u in updates]

        if wiring.phase1 == "avg":
            server.params = fedavg_aggregate(updates, weighted=config.weighted_avg)
        elif wiring.phase1 == "kd":
            server.params = kd_aggregate(server, updates, urk, config.alpha, config.kd_epochs,
                                         config.kd_lr, config.backtrack)
        else:
            client_params = [u.params for u in updates]
        server.round = t

        model = build_model(wiring, clients, server.params, client_params, urk, omegas)
        entry = evaluate(t, model)
        round_log.append(entry)
        log.debug("round %d: %s", t, entry)
        if valid is None:
            best_model = model
            continue
        if entry["valid_rmse"] < best_score:
            best_model, best_score, stale = model, entry["valid_rmse"], 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    final = best_model if (config.restore_best and valid is not None) else model
    return final, round_log


def fit_centralized(X, y, urk, omegas, params, steps=0, lr=1e-3, backtrack=True):
    """Pooled-data reference: LML ascent on all data, then an exact fit."""
    client = ClientState(0, X, y)
    if steps > 0:
        params = gradient_steps(lml_objective(urk, omegas, client.X, client.y), params, lr,
                                steps, backtrack=backtrack)
    return params, local_posterior(client, params, urk, omegas)

"""Unifying random kernels: sampled weights, a feature network and the
normalized concatenated feature map.

A feature map is fixed by three things:

* an :class:`OmegaSampler` that draws the random weights ``omega``;
* a :class:`KernelNetwork` ``g(omega, x)`` built from an extractor ``f``
  applied to (optionally replicated) inputs, a distribution shifter ``h``
  applied to ``omega``, and a combine rule;
* the sample count ``m`` and the normalizer ``sqrt(m)`` or ``sqrt(m - 1)``.

Inputs follow the column convention: ``X`` is ``p x n`` and the feature
matrix is ``(m * d) x n``, with row block ``i`` holding ``g(omega_i, X)``.
Learned weights live in a :class:`~fedbnr.autodiff.ParamVector` together
with ``log_sigma`` and ``log_lambda`` so the same vector is what clients
train and the server averages.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import autodiff as ad
from .autodiff import ParamVector
from .errors import ShapeMismatch

COMBINES = ("rff", "inner", "power")
NONLINEARITIES = {
    "exp": ad.exp,
    "cos": ad.cos,
    "sin": ad.sin,
    "tanh": ad.tanh,
    "relu": ad.relu,
    "identity": lambda x: x,
}
ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu, "cos": ad.cos, "sin": ad.sin}
NORMALIZATIONS = ("sqrt_m", "sqrt_m_minus_1")
REPLICATE_POLICIES = ("none", "multiply", "add")


@dataclass(frozen=True)
class OmegaSampler:
    """Distribution of the random weights.

    ``kind="normal"`` draws ``N(0, scale^2 I)`` of size ``dim``;
    ``kind="multinomial"`` draws counts from ``Multi(trials, probs)``.
    """

    kind: str = "normal"
    dim: int = 1
    scale: float = 1.0
    trials: int = 0
    probs: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind == "multinomial":
            probs = np.asarray(self.probs, dtype=float)
            if probs.ndim != 1 or probs.size < 1 or np.any(probs < 0):
                raise ValueError("multinomial probabilities must be a non-negative vector")
            if abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError("multinomial probabilities must sum to 1")
            if self.trials < 1:
                raise ValueError("multinomial needs at least one trial")
            object.__setattr__(self, "dim", int(probs.size))
        elif self.kind == "normal":
            if self.dim < 1:
                raise ValueError("omega dimension must be >= 1")
        else:
            raise ValueError(f"unknown sampler kind {self.kind!r}")


@dataclass(frozen=True)
class KernelNetwork:
    """Architecture of ``g(omega, x)``.

    extractor
        Hidden widths of ``f``; ``()`` makes ``f`` the identity (so
        ``latent_dim`` must equal ``input_dim``), otherwise ``f`` is
        affine -> activation -> ... -> affine ending at ``latent_dim``.
    shifter
        ``None`` for an identity ``h``; otherwise hidden widths of a residual
        MLP ``h(w) = w + MLP(w)`` so the identity is always reachable.
    combine
        ``"rff"``: ``[cos(h(w)^T f(x)), sin(h(w)^T f(x))]`` (d = 2);
        ``"inner"``: ``nonlinearity(h(w)^T f(x))`` (d = 1);
        ``"power"``: ``prod_i xbar_i ** w_i`` with
        ``xbar = [sqrt(2c), sqrt(2p) x]`` (d = 1, no learned weights).
    replicate
        ``"multiply"`` feeds ``x * (1 + s * eps_w)`` and ``"add"`` feeds
        ``x + s * eps_w`` to ``f``, where ``eps_w`` are ``input_dim`` extra
        standard-normal coordinates carried by each omega sample.
    """

    input_dim: int
    latent_dim: int = None
    extractor: tuple = ()
    shifter: tuple = None
    combine: str = "rff"
    activation: str = "tanh"
    nonlinearity: str = "exp"
    replicate: str = "none"
    replicate_scale: float = 0.1
    poly_offset: float = 0.0

    def __post_init__(self):
        if self.latent_dim is None:
            object.__setattr__(self, "latent_dim", self.input_dim)
        object.__setattr__(self, "extractor", tuple(int(w) for w in self.extractor))
        if self.shifter is not None:
            object.__setattr__(self, "shifter", tuple(int(w) for w in self.shifter))
        if self.combine not in COMBINES:
            raise ValueError(f"unknown combine rule {self.combine!r}")
        if self.replicate not in REPLICATE_POLICIES:
            raise ValueError(f"unknown replicate policy {self.replicate!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if not self.extractor and self.latent_dim != self.input_dim:
            raise ValueError("identity extractor requires latent_dim == input_dim")
        if self.combine == "power" and (self.extractor or self.shifter is not None
                                        or self.replicate != "none"):
            raise ValueError("the power combine takes raw inputs only")

    @property
    def output_dim(self):
        return 2 if self.combine == "rff" else 1


@dataclass(frozen=True)
class UrkConfig:
    sampler: OmegaSampler
    network: KernelNetwork
    m: int = 50
    normalization: str = "sqrt_m_minus_1"

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least two omega samples")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        net = self.network
        if net.combine == "power":
            if self.sampler.kind != "multinomial" or self.sampler.dim != net.input_dim + 1:
                raise ValueError("power combine needs a multinomial sampler of dim p + 1")
        elif self.sampler.kind != "normal" or self.sampler.dim != net.latent_dim:
            raise ValueError("sampler dim must equal the network latent dim")

    @property
    def feature_dim(self):
        return self.m * self.network.output_dim

    @property
    def omega_dim(self):
        extra = self.network.input_dim if self.network.replicate != "none" else 0
        return self.sampler.dim + extra

    @property
    def normalizer(self):
        return math.sqrt(self.m if self.normalization == "sqrt_m" else self.m - 1)


def sample_omegas(config, m=None, seed=None):
    """``m x omega_dim`` i.i.d. draws, deterministic in the sampler seed."""
    s = config.sampler
    m = config.m if m is None else m
    rng = np.random.default_rng(s.seed if seed is None else seed)
    if s.kind == "normal":
        omega = s.scale * rng.standard_normal((m, s.dim))
    else:
        omega = rng.multinomial(s.trials, np.asarray(s.probs, dtype=float), size=m).astype(float)
    if config.omega_dim > s.dim:
        noise = rng.standard_normal((m, config.omega_dim - s.dim))
        omega = np.concatenate([omega, noise], axis=1)
    return omega


# -- learned weights -------------------------------------------------------

def _mlp_shapes(prefix, widths_in, hidden, width_out):
    sizes = [widths_in, *hidden, width_out]
    shapes = {}
    for i in range(len(sizes) - 1):
        shapes[f"{prefix}.{i}.W"] = (sizes[i + 1], sizes[i])
        shapes[f"{prefix}.{i}.b"] = (sizes[i + 1], 1)
    return shapes


def param_shapes(config):
    net = config.network
    shapes = {}
    if net.extractor:
        shapes.update(_mlp_shapes("f", net.input_dim, net.extractor, net.latent_dim))
    if net.shifter is not None:
        shapes.update(_mlp_shapes("h", config.sampler.dim, net.shifter, config.sampler.dim))
    shapes["log_sigma"] = ()
    shapes["log_lambda"] = ()
    return shapes


def init_params(config, seed=0, sigma=1.0, lam=1.0, shifter_scale=0.1):
    """Random network weights plus ``log_sigma`` and ``log_lambda``.

    Extractor layers use Glorot-normal weights; the shifter's output layer
    is scaled by ``shifter_scale`` so ``h`` starts close to the identity.
    """
    rng = np.random.default_rng(seed)
    blocks = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".W"):
            fan_out, fan_in = shape
            w = rng.standard_normal(shape) * math.sqrt(2.0 / (fan_in + fan_out))
            if name.startswith("h.") and name == _last_layer(config, "h"):
                w *= shifter_scale
            blocks[name] = w
        elif name.endswith(".b"):
            blocks[name] = np.zeros(shape)
    blocks["log_sigma"] = np.array(math.log(sigma))
    blocks["log_lambda"] = np.array(math.log(lam))
    return ParamVector.from_blocks(blocks)


def _last_layer(config, prefix):
    net = config.network
    hidden = net.extractor if prefix == "f" else net.shifter
    return f"{prefix}.{len(hidden)}.W"


def _mlp(blocks, prefix, x, depth, activation):
    for i in range(depth):
        x = blocks[f"{prefix}.{i}.W"] @ x + blocks[f"{prefix}.{i}.b"]
        if i < depth - 1:
            x = activation(x)
    return x


def sigma_lambda(params):
    return math.exp(float(params["log_sigma"])), math.exp(float(params["log_lambda"]))


# -- feature map -----------------------------------------------------------

def _check_inputs(config, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :] if config.network.input_dim == 1 else X[:, None]
    if X.ndim != 2 or X.shape[0] != config.network.input_dim:
        raise ShapeMismatch(
            f"inputs have {X.shape[0] if X.ndim == 2 else X.shape} rows, "
            f"network expects {config.network.input_dim}")
    return X


def _power_features(config, X, omegas):
    net = config.network
    p = net.input_dim
    xbar = np.concatenate([np.full((1, X.shape[1]), math.sqrt(2.0 * net.poly_offset)),
                           math.sqrt(2.0 * p) * X])
    counts = omegas[:, :p + 1].astype(np.int64)
    # integer powers keep the sign of negative inputs; a power table per
    # coordinate turns m*n pow calls into a gather
    top = int(counts.max(initial=0))
    exponents = np.arange(top + 1)[:, None]
    z = np.ones((omegas.shape[0], X.shape[1]))
    for i in range(p + 1):
        z *= (xbar[i][None, :] ** exponents)[counts[:, i]]
    return z


def network_features(config, blocks, omegas, X):
    """Unnormalized ``g(omega_i, X)`` stacked into ``(m*d) x n``.

    ``blocks`` may hold ndarrays or :class:`~fedbnr.autodiff.Var` leaves.
    """
    net = config.network
    if net.combine == "power":
        return _power_features(config, X, omegas)

    act = ACTIVATIONS[net.activation]
    dim = config.sampler.dim
    w = omegas[:, :dim]
    if net.shifter is not None:
        w = ad.transpose(_mlp(blocks, "h", w.T, len(net.shifter) + 1, act)) + w

    if net.replicate == "none":
        f = _mlp(blocks, "f", X, len(net.extractor) + 1, act) if net.extractor else X
        proj = w @ f
    else:
        eps = omegas[:, dim:][:, :, None]
        scale = net.replicate_scale
        xr = X[None, :, :] * (1.0 + scale * eps) if net.replicate == "multiply" \
            else X[None, :, :] + scale * eps
        f = _mlp(blocks, "f", xr, len(net.extractor) + 1, act) if net.extractor else xr
        proj = ad.sum_(ad.reshape(w, (w.shape[0], dim, 1)) * f, axis=1)

    if net.combine == "rff":
        m, n = proj.shape
        z = ad.reshape(ad.stack([ad.cos(proj), ad.sin(proj)], axis=1), (2 * m, n))
    else:
        z = NONLINEARITIES[net.nonlinearity](proj)
    return z


def feature_map(config, X, params=None, omegas=None):
    """Normalized feature matrix ``Phi`` of shape ``(m*d) x n``."""
    X = _check_inputs(config, X)
    if params is None:
        params = init_params(config)
    if omegas is None:
        omegas = sample_omegas(config)
    blocks = params.blocks() if isinstance(params, ParamVector) else params
    return network_features(config, blocks, omegas, X) / config.normalizer


def urk_kernel(config, X, X2, params=None, omegas=None):
    """``feature_map(X)^T feature_map(X2)``."""
    if params is None:
        params = init_params(config)
    if omegas is None:
        omegas = sample_omegas(config)
    phi = feature_map(config, X, params, omegas)
    phi2 = feature_map(config, X2, params, omegas)
    return phi.T @ phi2


def pairwise_estimate(config, X, X2, m, params=None, seed=None, chunk=20000):
    """Monte-Carlo estimate of ``k(x_j, x2_j)`` for each column pair.

    Streams omega samples in chunks so very large ``m`` stays in bounded
    memory. Returns ``(estimate, standard_error)`` where the estimate is the
    sample mean of ``z(x)^T z(x2)`` (the ``sqrt(m)`` normalization) and
    the standard error is the sample std over omega draws divided by
    ``sqrt(m)``.
    """
    X = _check_inputs(config, X)
    X2 = _check_inputs(config, X2)
    if X.shape[1] != X2.shape[1]:
        raise ShapeMismatch("pairwise estimate needs equal column counts")
    if params is None:
        params = init_params(config)
    blocks = params.blocks()
    omegas = sample_omegas(config, m=m, seed=seed)
    d = config.network.output_dim
    total = np.zeros(X.shape[1])
    total_sq = np.zeros(X.shape[1])
    for start in range(0, m, chunk):
        om = omegas[start:start + chunk]
        z1 = network_features(config, blocks, om, X)
        z2 = network_features(config, blocks, om, X2)
        prod = (z1 * z2).reshape(om.shape[0], d, -1).sum(axis=1)
        total += prod.sum(axis=0)
        total_sq += (prod ** 2).sum(axis=0)
    est = total / m
    var = np.maximum(total_sq / m - est ** 2, 0.0) * m / (m - 1)
    return est, np.sqrt(var / m)


# -- named constructions ---------------------------------------------------

def rff_gaussian(lengthscale, dim, m=1000, seed=0):
    """Random Fourier features for ``exp(-|x - x'|^2 / (2 l^2))``."""
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    return UrkConfig(
        sampler=OmegaSampler("normal", dim=dim, scale=1.0 / lengthscale, seed=seed),
        network=KernelNetwork(input_dim=dim, combine="rff"),
        m=m, normalization="sqrt_m")


def exp_kernel_construction(dim, m=1000, seed=0):
    """``g(w, x) = exp(w^T x)``, ``w ~ N(0, I)``; limit ``exp(|x + x'|^2 / 2)``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return UrkConfig(
        sampler=OmegaSampler("normal", dim=dim, seed=seed),
        network=KernelNetwork(input_dim=dim, combine="inner", nonlinearity="exp"),
        m=m, normalization="sqrt_m")


def poly_kernel_construction(c, n, dim, m=1000, seed=0):
    """Multinomial construction whose limit is ``(x^T x' + c)^n``."""
    if c < 0 or n < 1:
        raise ValueError("need c >= 0 and n >= 1")
    probs = (0.5,) + (1.0 / (2 * dim),) * dim
    return UrkConfig(
        sampler=OmegaSampler("multinomial", trials=int(n), probs=probs, seed=seed),
        network=KernelNetwork(input_dim=dim, combine="power", poly_offset=float(c)),
        m=m, normalization="sqrt_m")


def learned_urk(input_dim, hidden=(32,), latent_dim=5, shifter=(5,), m=50,
                activation="tanh", replicate="none", replicate_scale=0.1,
                normalization="sqrt_m_minus_1", seed=0):
    """Deep kernel used for federated training: ``f`` extractor, residual
    shifter ``h`` on standard-normal omega, and a stationary RFF head in
    the latent space."""
    return UrkConfig(
        sampler=OmegaSampler("normal", dim=latent_dim, seed=seed),
        network=KernelNetwork(input_dim=input_dim, latent_dim=latent_dim,
                              extractor=tuple(hidden), shifter=shifter,
                              combine="rff", activation=activation,
                              replicate=replicate, replicate_scale=replicate_scale),
        m=m, normalization=normalization)


def closed_form(kind, x, x2, lengthscale=1.0, c=0.0, n=1):
    """Exact limit kernel value for ``kind`` in gaussian / exp / poly."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise ShapeMismatch("closed form needs inputs of equal dimension")
    if kind == "gaussian":
        delta = x - x2
        return float(np.exp(-delta @ delta / (2.0 * lengthscale ** 2)))
    if kind == "exp":
        s = x + x2
        return float(np.exp(s @ s / 2.0))
    if kind == "poly":
        return float((x @ x2 + c) ** n)
    raise ValueError(f"unknown kernel kind {kind!r}")

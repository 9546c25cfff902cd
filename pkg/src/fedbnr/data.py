"""Dataset ingestion, splits, client partitions and synthetic generators.

Inputs are stored feature-major (``X`` is ``p x n``) to match the feature
maps. Standardization statistics always come from the training split.
"""

from dataclasses import dataclass, replace
import csv
import logging

import numpy as np

from .errors import DegenerateFeature, EmptyClient, MissingTarget, ParseError, TooFewRows

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ()
    x_mean: np.ndarray = None
    x_std: np.ndarray = None
    y_mean: float = 0.0
    y_std: float = 1.0
    dropped: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if X.shape[1] != y.shape[0]:
            raise ValueError(f"X has {X.shape[1]} columns but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains NaN or Inf")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.feature_names:
            object.__setattr__(self, "feature_names",
                               tuple(f"x{i}" for i in range(X.shape[0])))

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[0]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, X=self.X[:, indices], y=self.y[indices])

    def destandardize_y(self, values):
        return np.asarray(values) * self.y_std + self.y_mean


@dataclass(frozen=True)
class PartitionPlan:
    """Client id -> row indices, plus how the partition was cut."""

    clients: dict
    sort_feature: int = None
    boundaries: tuple = ()

    @property
    def num_clients(self):
        return len(self.clients)

    def client_data(self, ds):
        return [ds.subset(self.clients[c]) for c in sorted(self.clients)]


def load_csv(path, target):
    """Read a numeric CSV with a header row.

    ``target`` is a column name or integer index. Rows with an empty or
    non-numeric cell are dropped; the count is kept on the dataset.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path} is empty") from None
        rows = list(reader)
    if isinstance(target, int) or (isinstance(target, str) and target.lstrip("-").isdigit()
                                   and target not in header):
        idx = int(target)
        if not -len(header) <= idx < len(header):
            raise MissingTarget(f"column index {idx} out of range")
        idx %= len(header)
    elif target in header:
        idx = header.index(target)
    else:
        raise MissingTarget(f"target column {target!r} not in {header}")

    values, dropped = [], 0
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            parsed = [float(cell) for cell in row]
        except ValueError:
            dropped += 1
            continue
        if not all(np.isfinite(parsed)):
            dropped += 1
            continue
        values.append(parsed)
    if dropped:
        log.warning("%s: dropped %d rows with missing or non-numeric cells", path, dropped)
    if not values:
        raise ParseError(f"{path} has no numeric rows")
    table = np.array(values)
    features = [i for i in range(len(header)) if i != idx]
    return Dataset(table[:, features].T, table[:, idx],
                   tuple(header[i] for i in features), dropped=dropped)


def split_811(ds, seed=0):
    """Uniform random 8:1:1 split into ``(train, test, valid)``.

    Test and validation get ``floor(n / 10)`` rows each; the rest trains.
    """
    if ds.n < 10:
        raise TooFewRows(f"need at least 10 rows to split, got {ds.n}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_small = ds.n // 10
    test, valid, train = perm[:n_small], perm[n_small:2 * n_small], perm[2 * n_small:]
    return ds.subset(np.sort(train)), ds.subset(np.sort(test)), ds.subset(np.sort(valid))


def standardize(train, *others):
    """Standardize features and targets with statistics from ``train``."""
    x_mean = train.X.mean(axis=1, keepdims=True)
    x_std = train.X.std(axis=1, keepdims=True)
    x_std[x_std == 0] = 1.0
    y_mean = float(train.y.mean())
    y_std = float(train.y.std()) or 1.0

    def apply(ds):
        return replace(ds, X=(ds.X - x_mean) / x_std, y=(ds.y - y_mean) / y_std,
                       x_mean=x_mean, x_std=x_std, y_mean=y_mean, y_std=y_std)

    return tuple(apply(ds) for ds in (train, *others))


def split_kd(valid, fraction=0.8, seed=0):
    """Carve ``fraction`` of the validation set out for knowledge distillation.

    Returns ``(kd, remaining_valid)``.
    """
    perm = np.random.default_rng(seed).permutation(valid.n)
    k = int(round(fraction * valid.n))
    return valid.subset(np.sort(perm[:k])), valid.subset(np.sort(perm[k:]))


def pearson(x, y):
    xc, yc = x - x.mean(), y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    return float(xc @ yc / denom) if denom > 0 else 0.0


def correlation_sorted_partition(train, num_clients, seed=0):
    """Non-i.i.d. partition: sort by the feature most correlated with the
    target, cut into ``2 * num_clients`` contiguous chunks, and hand each
    client two chunks drawn by a seeded shuffle."""
    if num_clients < 1:
        raise ValueError("need at least one client")
    if train.n < 2 * num_clients:
        raise TooFewRows(f"{train.n} rows cannot fill {2 * num_clients} chunks")
    if np.all(train.X.std(axis=1) == 0):
        raise DegenerateFeature("every feature is constant")
    corr = np.array([pearson(train.X[j], train.y) if train.X[j].std() > 0 else 0.0
                     for j in range(train.p)])
    feature = int(np.argmax(np.abs(corr)))
    if train.X[feature].std() == 0:
        raise DegenerateFeature(f"feature {feature} is constant")
    order = np.argsort(train.X[feature], kind="stable")
    chunks = np.array_split(order, 2 * num_clients)
    bounds = tuple(int(b) for b in np.cumsum([len(c) for c in chunks])[:-1])
    pick = np.random.default_rng(seed).permutation(2 * num_clients)
    clients = {c: np.sort(np.concatenate([chunks[pick[2 * c]], chunks[pick[2 * c + 1]]]))
               for c in range(num_clients)}
    return PartitionPlan(clients, feature, bounds)


def range_partition(ds, boundaries, feature=0):
    """Contiguous input-range clients split at the sorted ``boundaries``."""
    boundaries = tuple(float(b) for b in boundaries)
    if list(boundaries) != sorted(boundaries):
        raise ValueError("boundaries must be sorted")
    edges = (-np.inf, *boundaries, np.inf)
    x = ds.X[feature]
    clients = {}
    for c in range(len(edges) - 1):
        idx = np.flatnonzero((x >= edges[c]) & (x < edges[c + 1]))
        if idx.size == 0:
            raise EmptyClient(f"range [{edges[c]}, {edges[c + 1]}) holds no points")
        clients[c] = idx
    return PartitionPlan(clients, feature, boundaries)


FUNCTIONS = {
    "identity": lambda x: x,
    "sin": lambda x: 2.0 * np.sin(x),
    "sinc": lambda x: 3.0 * np.sinc(x / np.pi) + 0.2 * x,
    "step": lambda x: (x > 0).astype(float),
    "cubic": lambda x: 0.05 * x ** 3 - 0.5 * x,
}


def synthetic_1d(fn="sin", low=-5.0, high=5.0, n=200, noise_sigma=0.5, seed=0):
    """Uniform inputs on ``[low, high]`` with ``y = f(x) + N(0, noise^2)``.

    ``fn`` is a callable or a key of :data:`FUNCTIONS`.
    """
    if not high > low:
        raise ValueError("empty input range")
    if n < 1:
        raise ValueError("n must be >= 1")
    f = FUNCTIONS[fn] if isinstance(fn, str) else fn
    rng = np.random.default_rng(seed)
    x = rng.uniform(low, high, n)
    y = f(x) + noise_sigma * rng.standard_normal(n)
    return Dataset(x[None, :], y, ("x",))


def synthetic_ccpp(n=1000, seed=0):
    """Four-feature stand-in with the shape of the power-plant regression
    data: ambient temperature dominates the target with a strong negative
    correlation, the other three features add weaker structure."""
    rng = np.random.default_rng(seed)
    at = rng.uniform(2.0, 35.0, n)
    v = 25.0 + 1.25 * at + rng.normal(0.0, 6.0, n)
    ap = rng.normal(1013.0, 6.0, n)
    rh = np.clip(rng.normal(73.0, 14.0, n) - 0.4 * (at - 20.0), 25.0, 100.0)
    pe = (497.0 - 1.75 * at - 0.25 * v + 0.06 * (ap - 1013.0) - 0.15 * (rh - 73.0)
          + 4.0 * np.sin(at / 4.0) + rng.normal(0.0, 4.0, n))
    return Dataset(np.vstack([at, v, ap, rh]), pe, ("AT", "V", "AP", "RH"))


def synthetic_blr(features, n, sigma=0.2, lam=1.0, seed=0, low=-3.0, high=3.0, dim=1):
    """Data drawn exactly from a Bayesian linear model over ``features``.

    ``features(X)`` maps ``dim x n`` inputs to a ``D x n`` feature matrix;
    weights come from the ``N(0, lam^2 I)`` prior.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(low, high, (dim, n))
    phi = features(X)
    w = lam * rng.standard_normal(phi.shape[0])
    y = w @ phi + sigma * rng.standard_normal(n)
    return Dataset(X, y), w

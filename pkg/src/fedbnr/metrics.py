"""Point-error, interval-calibration and paired significance metrics."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.stats import norm, rankdata

from .errors import EmptyInput, TooFewPairs

DEFAULT_LEVELS = tuple(np.round(np.arange(1, 20) * 0.05, 2))
EXACT_MAX_PAIRS = 20


def rmse(pred, targets):
    pred = np.asarray(pred, dtype=float).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    if pred.size == 0:
        raise EmptyInput("rmse of an empty sample")
    if pred.shape != targets.shape:
        raise ValueError("predictions and targets differ in length")
    return float(np.sqrt(np.mean((pred - targets) ** 2)))


@dataclass(frozen=True)
class CalibrationCurve:
    """Empirical coverage of central predictive intervals.

    ``inside[i, j]`` tells whether target ``j`` falls in the interval at
    ``levels[i]``.
    """

    levels: np.ndarray
    coverage: np.ndarray
    inside: np.ndarray


def calibration_curve(pred, targets, levels=DEFAULT_LEVELS):
    """Coverage of ``mean +/- z_{(1+p)/2} * std`` for each level ``p``.

    ``pred`` is anything with per-point ``mean`` and ``variance`` arrays,
    normally a :class:`~fedbnr.blr.PredictiveDistribution`.
    """
    mean = np.asarray(pred.mean, dtype=float).ravel()
    std = np.sqrt(np.asarray(pred.variance, dtype=float).ravel())
    targets = np.asarray(targets, dtype=float).ravel()
    levels = np.asarray(levels, dtype=float)
    if targets.size == 0:
        raise EmptyInput("calibration needs at least one target")
    if np.any(np.diff(levels) <= 0) or np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("levels must be strictly increasing inside (0, 1)")
    if np.any(std <= 0):
        raise ValueError("predictive variances must be positive")
    half = norm.ppf(0.5 + levels / 2.0)[:, None] * std[None, :]
    inside = np.abs(targets - mean)[None, :] <= half
    return CalibrationCurve(levels, inside.mean(axis=1), inside)


def ece(curve):
    return float(np.mean(np.abs(curve.coverage - curve.levels)))


def mce(curve):
    return float(np.max(np.abs(curve.coverage - curve.levels)))


def brier(curve):
    """Mean over levels and points of ``(level - 1{target inside})^2``."""
    hits = curve.inside.astype(float)
    return float(np.mean((curve.levels[:, None] - hits) ** 2))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n_effective: int
    method: str

    __test__ = False  # not a pytest class


def _exact_upper_tail(ranks, w):
    """P(W+ >= w) by enumerating the sign-assignment distribution.

    Midranks are multiples of 1/2, so doubled ranks are integers and the
    2^n sign vectors collapse into a polynomial-product count table.
    """
    doubled = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    counts = np.zeros(int(doubled.sum()) + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:counts.size - r]
        counts = counts + shifted
    threshold = int(np.rint(2 * w))
    return float(counts[threshold:].sum() / counts.sum())


def _normal_upper_tail(ranks, w, n):
    mu = n * (n + 1) / 4.0
    _, ties = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(ties ** 3 - ties) / 48.0
    z = (w - mu - 0.5) / math.sqrt(var)
    return float(norm.sf(z))


def wilcoxon_one_tailed(a, b, alternative="a_greater", method="auto"):
    """One-tailed Wilcoxon signed-rank test on paired samples.

    ``alternative="a_greater"`` tests whether ``a - b`` tends to be
    positive. The statistic is the sum of ranks of positive differences
    (midranks on ties, zero differences dropped). ``method="auto"`` uses the
    exact null distribution for up to 20 pairs and a tie-corrected normal
    approximation with continuity correction beyond.
    """
    d = np.asarray(a, dtype=float).ravel() - np.asarray(b, dtype=float).ravel()
    d = d[d != 0]
    n = d.size
    if n < 5:
        raise TooFewPairs(f"{n} non-zero differences; need at least 5")
    if alternative not in ("a_greater", "a_less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_PAIRS else "normal"
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    # a_less is the upper tail of the negative-rank sum
    w_tail = w_plus if alternative == "a_greater" else float(ranks[d < 0].sum())
    if method == "exact":
        p = _exact_upper_tail(ranks, w_tail)
    elif method == "normal":
        p = _normal_upper_tail(ranks, w_tail, n)
    else:
        raise ValueError(f"unknown method {method!r}")
    return TestResult(w_plus, min(1.0, max(p, np.finfo(float).tiny)), n, method)

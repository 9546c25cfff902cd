import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import rankdata, wilcoxon

from fedbnr.blr import PredictiveDistribution
from fedbnr.errors import EmptyInput, TooFewPairs
from fedbnr.metrics import (CalibrationCurve, brier, calibration_curve, ece, mce, rmse,
                            wilcoxon_one_tailed)


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    assert rmse(np.arange(5.0) - 0.7, np.arange(5.0)) == pytest.approx(0.7)
    with pytest.raises(EmptyInput):
        rmse([], [])


def test_coverage_of_well_specified_predictions():
    rng = np.random.default_rng(0)
    mean, std = rng.standard_normal(10_000), rng.uniform(0.5, 2.0, 10_000)
    targets = mean + std * rng.standard_normal(10_000)
    curve = calibration_curve(PredictiveDistribution(mean, std ** 2), targets)
    np.testing.assert_allclose(curve.coverage, curve.levels, atol=0.02)


def test_coverage_extremes():
    targets = np.linspace(-1, 1, 7)
    exact = calibration_curve(PredictiveDistribution(targets, np.full(7, 1e-300)), targets)
    np.testing.assert_array_equal(exact.coverage, 1.0)
    far = calibration_curve(PredictiveDistribution(targets + 100.0, np.full(7, 1e-6)), targets)
    np.testing.assert_array_equal(far.coverage, 0.0)


def curve(levels, coverage):
    levels = np.asarray(levels, dtype=float)
    return CalibrationCurve(levels, np.asarray(coverage, dtype=float), None)


def test_ece_mce_examples():
    levels = np.round(np.arange(1, 10) * 0.1, 1)
    assert ece(curve(levels, levels)) == 0.0 and mce(curve(levels, levels)) == 0.0
    ones = curve(levels, np.ones(9))
    assert ece(ones) == pytest.approx(0.5)
    assert mce(ones) == pytest.approx(0.9)
    half = curve([0.5], [0.3])
    assert ece(half) == pytest.approx(0.2) and mce(half) == pytest.approx(0.2)


def test_brier_examples():
    assert brier(CalibrationCurve(np.array([1.0]), None, np.ones((1, 4), bool))) == 0.0
    half = CalibrationCurve(np.array([0.5]), None, np.array([[True, False, True, False]]))
    assert brier(half) == pytest.approx(0.25)
    assert brier(CalibrationCurve(np.array([1.0]), None, np.zeros((1, 3), bool))) == 1.0


@given(st.integers(1, 60), st.integers(0, 2 ** 31))
def test_metric_ranges(n, seed):
    rng = np.random.default_rng(seed)
    pred = PredictiveDistribution(rng.standard_normal(n), rng.uniform(0.01, 3, n))
    c = calibration_curve(pred, rng.standard_normal(n) * 2)
    assert np.all(np.diff(c.coverage) >= 0)
    assert 0 <= ece(c) <= mce(c) <= 1
    assert 0 <= brier(c) <= 1


def brute_force_p(d):
    """Upper-tail p of W+ by enumerating every sign vector."""
    d = d[d != 0]
    ranks = rankdata(np.abs(d))
    w = ranks[d > 0].sum()
    hits = sum(ranks[np.array(signs, bool)].sum() >= w - 1e-9
               for signs in itertools.product([0, 1], repeat=d.size))
    return hits / 2 ** d.size


def test_wilcoxon_all_positive_five():
    res = wilcoxon_one_tailed(np.arange(1, 6) + 1.0, np.ones(5), method="exact")
    assert res.statistic == 15.0
    assert res.p_value == pytest.approx(1 / 32, abs=1e-15)


def test_wilcoxon_needs_pairs():
    with pytest.raises(TooFewPairs):
        wilcoxon_one_tailed(np.ones(8), np.ones(8))


@given(st.lists(st.integers(-6, 6), min_size=5, max_size=11), st.sampled_from(["a_greater", "a_less"]))
def test_wilcoxon_exact_matches_enumeration(diffs, alternative):
    d = np.array(diffs, dtype=float)
    if np.count_nonzero(d) < 5:
        return
    res = wilcoxon_one_tailed(d, np.zeros_like(d), alternative=alternative, method="exact")
    assert res.p_value == pytest.approx(brute_force_p(d if alternative == "a_greater" else -d),
                                        abs=1e-12)


@given(st.integers(5, 20), st.integers(0, 2 ** 31))
def test_wilcoxon_exact_matches_scipy_without_ties(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(n), rng.standard_normal(n) + 0.3
    res = wilcoxon_one_tailed(a, b, alternative="a_less", method="exact")
    ref = wilcoxon(a, b, alternative="less", method="exact")
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_wilcoxon_normal_matches_scipy_approx():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(40), rng.standard_normal(40)
    res = wilcoxon_one_tailed(a, b, method="normal")
    ref = wilcoxon(a, b, alternative="greater", method="approx", correction=True)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)

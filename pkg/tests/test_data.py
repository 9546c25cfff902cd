import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedbnr.data import (Dataset, correlation_sorted_partition, load_csv, pearson,
                         range_partition, split_811, split_kd, standardize, synthetic_1d,
                         synthetic_ccpp)
from fedbnr.errors import EmptyClient, MissingTarget, ParseError, TooFewRows


def write(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text)
    return path


def test_csv_roundtrip(tmp_path):
    ds = load_csv(write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7.5,-8,9\n"), "y")
    np.testing.assert_array_equal(ds.X, [[1, 4, 7.5], [2, 5, -8]])
    np.testing.assert_array_equal(ds.y, [3, 6, 9])
    assert ds.feature_names == ("a", "b") and ds.dropped == 0
    by_index = load_csv(write(tmp_path, "a,b,y\n1,2,3\n"), 0)
    np.testing.assert_array_equal(by_index.y, [1.0])


def test_csv_drops_non_numeric_rows(tmp_path, caplog):
    ds = load_csv(write(tmp_path, "a,y\n1,2\nx,3\n4,5\n"), "y")
    assert ds.n == 2 and ds.dropped == 1
    assert "dropped 1" in caplog.text


def test_csv_errors(tmp_path):
    with pytest.raises(MissingTarget):
        load_csv(write(tmp_path, "a,b\n1,2\n"), "y")
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "a,b\n1,2,3\n"), "b")
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, ""), "b")


def test_four_feature_file(tmp_path):
    ds = synthetic_ccpp(50, seed=1)
    rows = "\n".join(",".join(repr(float(v)) for v in [*ds.X[:, j], ds.y[j]]) for j in range(ds.n))
    loaded = load_csv(write(tmp_path, "AT,V,AP,RH,PE\n" + rows + "\n"), "PE")
    assert loaded.p == 4 and loaded.n == 50
    np.testing.assert_array_equal(loaded.X, ds.X)


def test_split_sizes_and_seeds():
    ds = synthetic_1d(n=10)
    assert [s.n for s in split_811(ds)] == [8, 1, 1]
    big = synthetic_1d(n=100)
    a, b = split_811(big, seed=0), split_811(big, seed=1)
    assert [s.n for s in a] == [s.n for s in b] == [80, 10, 10]
    assert not np.array_equal(a[0].X, b[0].X)
    with pytest.raises(TooFewRows):
        split_811(synthetic_1d(n=9))


@given(st.integers(10, 4000), st.integers(0, 2 ** 31))
def test_split_proportions_and_disjointness(n, seed):
    ds = Dataset(np.arange(n, dtype=float)[None, :], np.zeros(n))
    train, test, valid = split_811(ds, seed)
    assert abs(test.n - n / 10) < 1 and abs(valid.n - n / 10) < 1
    assert abs(train.n - 0.8 * n) <= 2
    rows = np.concatenate([train.X[0], test.X[0], valid.X[0]])
    np.testing.assert_array_equal(np.sort(rows), np.arange(n))


def test_skillcraft_scale_split():
    train, test, valid = split_811(Dataset(np.zeros((1, 3338)), np.zeros(3338)))
    assert (train.n, test.n, valid.n) == (2672, 333, 333)


def test_standardize_uses_train_statistics():
    train, test = standardize(synthetic_1d(n=50, seed=0), synthetic_1d(n=50, seed=1))
    np.testing.assert_allclose(train.X.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(train.y.std(), 1.0)
    assert test.y_mean == train.y_mean
    np.testing.assert_allclose(train.destandardize_y(train.y), synthetic_1d(n=50, seed=0).y)


def test_kd_split():
    kd, rest = split_kd(synthetic_1d(n=50), 0.8, seed=0)
    assert (kd.n, rest.n) == (40, 10)


def test_partition_selects_perfectly_correlated_feature():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((3, 40))
    plan = correlation_sorted_partition(Dataset(X, 2.0 * X[1]), 4)
    assert plan.sort_feature == 1
    assert pearson(X[1], 2.0 * X[1]) == pytest.approx(1.0)


def test_partition_hand_example():
    ds = Dataset(np.array([[1.0, 2.0, 3.0, 4.0]]), np.array([1.0, 3.0, 2.0, 4.0]))
    plan = correlation_sorted_partition(ds, 2, seed=0)
    assert plan.boundaries == (1, 2, 3)
    assert sorted(len(v) for v in plan.clients.values()) == [2, 2]
    assert sorted(np.concatenate(list(plan.clients.values())).tolist()) == [0, 1, 2, 3]


def test_single_client_holds_everything():
    ds = synthetic_ccpp(30)
    plan = correlation_sorted_partition(ds, 1)
    np.testing.assert_array_equal(plan.clients[0], np.arange(30))


@given(st.integers(1, 12), st.integers(0, 2 ** 31))
def test_partition_is_a_partition(k, seed):
    ds = synthetic_ccpp(200, seed=seed % 1000)
    plan = correlation_sorted_partition(ds, k, seed=seed)
    rows = np.concatenate([plan.clients[c] for c in range(k)])
    np.testing.assert_array_equal(np.sort(rows), np.arange(200))
    sizes = [len(plan.clients[c]) for c in range(k)]
    assert max(sizes) - min(sizes) <= 2


def test_synthetic_noise_free_identity():
    ds = synthetic_1d("identity", n=20, noise_sigma=0.0)
    np.testing.assert_array_equal(ds.y, ds.X[0])


def test_synthetic_noise_level():
    ds = synthetic_1d("sin", -5, 5, 200, 0.5, seed=0)
    resid = ds.y - 2.0 * np.sin(ds.X[0])
    assert 0.4 <= resid.std() <= 0.6


def test_step_function():
    ds = synthetic_1d("step", n=30, noise_sigma=0.0)
    np.testing.assert_array_equal(ds.y, (ds.X[0] > 0).astype(float))


def test_range_partition_two_clients():
    ds = synthetic_1d("sin", -5, 5, 200, 0.5)
    plan = range_partition(ds, [0.0])
    assert plan.num_clients == 2
    assert len(plan.clients[0]) + len(plan.clients[1]) == 200
    left, right = plan.client_data(ds)
    assert left.X.max() < 0.0 <= right.X.min()


def test_range_partition_empty_client():
    with pytest.raises(EmptyClient):
        range_partition(synthetic_1d(n=20), [-10.0])


def test_range_partition_covers_rows():
    ds = synthetic_1d(n=60)
    plan = range_partition(ds, [-2.0, 2.0])
    np.testing.assert_array_equal(np.sort(np.concatenate(list(plan.clients.values()))),
                                  np.arange(60))


def test_ccpp_shape():
    ds = synthetic_ccpp(500, seed=0)
    assert ds.p == 4
    assert pearson(ds.X[0], ds.y) < -0.8

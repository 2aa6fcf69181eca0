import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smest.core import ConfigError, ValidationError
from smest.evaluation import cross_validate, mae, make_group_folds, r2, rmse
from smest.features import FeatureMatrix
from smest.forest import ForestParams

finite = st.floats(-10, 10, allow_nan=False)


def test_three_point_example():
    y, y_hat = [0, 0.2, 0.4], [0.1, 0.2, 0.3]
    assert abs(r2(y, y_hat) - 0.75) <= 1e-12
    assert abs(rmse(y, y_hat) - math.sqrt(0.02 / 3)) <= 1e-12
    assert abs(mae(y, y_hat) - 0.2 / 3) <= 1e-12
    assert round(rmse(y, y_hat), 4) == 0.0816 and round(mae(y, y_hat), 4) == 0.0667


def test_identities():
    y = np.array([0.1, 0.25, 0.3, 0.45])
    assert (r2(y, y), rmse(y, y), mae(y, y)) == (1.0, 0.0, 0.0)
    assert r2(y, np.full(4, y.mean())) == 0.0


def test_metric_errors():
    with pytest.raises(ValidationError):
        r2([0.2, 0.2], [0.1, 0.3])
    with pytest.raises(ValidationError):
        rmse([1, 2], [1])
    with pytest.raises(ValidationError):
        mae([], [])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=40))
def test_rmse_at_least_mae(pairs):
    y, y_hat = np.array(pairs).T
    assert rmse(y, y_hat) >= mae(y, y_hat) - 1e-12 >= -1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=40), st.floats(-5, 5))
def test_shift_invariance(pairs, c):
    y, y_hat = np.array(pairs).T
    assert rmse(y + c, y_hat + c) == pytest.approx(rmse(y, y_hat), abs=1e-9)
    assert mae(y + c, y_hat + c) == pytest.approx(mae(y, y_hat), abs=1e-9)
    if np.ptp(y) > 1e-3:
        assert r2(y + c, y_hat + c) == pytest.approx(r2(y, y_hat), rel=1e-6, abs=1e-9)
        assert r2(y, y_hat) <= 1.0


def test_fold_sizes():
    assert make_group_folds([f"S{i}" for i in range(10)], 5, 0).sizes() == [2] * 5
    assert sorted(make_group_folds([f"S{i:03d}" for i in range(113)], 5, 7).sizes(),
                  reverse=True) == [23, 23, 23, 22, 22]


def test_fold_plan_determinism_and_order_independence():
    ids = [f"S{i:03d}" for i in range(40)]
    a = make_group_folds(ids, 5, 3)
    assert a == make_group_folds(list(reversed(ids)), 5, 3)
    assert a != make_group_folds(ids, 5, 4)


def test_fold_plan_errors():
    with pytest.raises(ConfigError):
        make_group_folds(["a", "b", "c", "d"], 5, 0)
    with pytest.raises(ConfigError):
        make_group_folds(["a", "b"], 1, 0)


def _two_station_toy():
    x = np.arange(40.0)
    prov = [("A" if i % 2 == 0 else "B", 18000 + i) for i in range(40)]
    return FeatureMatrix(["x"], x.reshape(-1, 1), prov), 0.01 * x + 0.1


def test_two_station_linear_toy():
    matrix, y = _two_station_toy()
    plan = make_group_folds(["A", "B"], 2, 0)
    res = cross_validate(matrix, y, plan, ForestParams(n_trees=10))
    assert res.r2 > 0.9
    assert res.n_samples == 40 and len(res.per_fold) == 2
    assert res.rmse >= res.mae >= 0


def test_leakage_free_and_every_row_predicted():
    rng = np.random.default_rng(0)
    stations = [f"S{i:02d}" for i in range(12)]
    prov = [(stations[i % 12], 18000 + i) for i in range(96)]
    X = rng.normal(size=(96, 3))
    X[rng.random(X.shape) < 0.1] = np.nan
    y = rng.normal(size=96)
    plan = make_group_folds(stations, 4, 1)
    for f in range(4):
        test = plan.stations_in(f)
        train = set(stations) - test
        assert not train & test
    res = cross_validate(FeatureMatrix(["a", "b", "c"], X, prov), y, plan, ForestParams(n_trees=5))
    assert res.n_samples == 96 and not np.isnan(res.predictions).any()


def test_shuffling_rows_keeps_metrics():
    matrix, y = _two_station_toy()
    plan = make_group_folds(["A", "B"], 2, 0)
    params = ForestParams(n_trees=5)
    base = cross_validate(matrix, y, plan, params)
    perm = np.random.default_rng(1).permutation(len(y))
    shuffled = FeatureMatrix(matrix.column_names, matrix.values[perm], [matrix.provenance[i] for i in perm])
    again = cross_validate(shuffled, y[perm], plan, params)
    assert np.allclose(again.predictions, base.predictions[perm], rtol=0, atol=1e-12)
    assert again.r2 == pytest.approx(base.r2, abs=1e-12)


def test_cross_validate_errors():
    matrix, y = _two_station_toy()
    with pytest.raises(ValidationError, match="missing from the fold plan"):
        cross_validate(matrix, y, make_group_folds(["A", "C"], 2, 0))
    with pytest.raises(ValidationError):
        cross_validate(matrix, np.full(40, 0.3), make_group_folds(["A", "B"], 2, 0),
                       ForestParams(n_trees=2))


def test_empty_fold_is_skipped(caplog):
    matrix, y = _two_station_toy()
    plan = make_group_folds(["A", "B", "C"], 3, 0)
    res = cross_validate(matrix, y, plan, ForestParams(n_trees=3))
    assert len(res.per_fold) == 2 and "no test rows" in caplog.text

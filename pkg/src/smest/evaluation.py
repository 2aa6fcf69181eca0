"""Station-grouped K-fold cross-validation and regression metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from smest.core import ConfigError, RngStream, ValidationError
from smest.features import FeatureMatrix, column_medians, impute
from smest.forest import ForestParams, fit_forest, predict

log = logging.getLogger(__name__)

FOLD_STREAM = 0xF01D


class LeakageError(AssertionError):
    pass


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]

    def __post_init__(self):
        if any(not 0 <= f < self.k for f in self.assignment.values()):
            raise ValidationError("fold index out of range")

    def sizes(self) -> list[int]:
        out = [0] * self.k
        for f in self.assignment.values():
            out[f] += 1
        return out

    def stations_in(self, fold: int) -> set[str]:
        return {s for s, f in self.assignment.items() if f == fold}


def make_group_folds(station_ids: Iterable[str], k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle the sorted station ids with a seeded stream and deal them round-robin."""
    ids = sorted(set(station_ids))
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    if len(ids) < k:
        raise ConfigError(f"{len(ids)} stations cannot fill {k} folds")
    perm = RngStream(seed, FOLD_STREAM).permutation(len(ids))
    return FoldPlan(k, {ids[j]: pos % k for pos, j in enumerate(perm)})


def _check_pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValidationError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ValidationError("metrics need at least one sample")
    return y, y_hat


def r2(y, y_hat) -> float:
    y, y_hat = _check_pair(y, y_hat)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValidationError("r2 is undefined when the targets have zero variance")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


def rmse(y, y_hat) -> float:
    y, y_hat = _check_pair(y, y_hat)
    return math.sqrt(float(np.mean((y - y_hat) ** 2)))


def mae(y, y_hat) -> float:
    y, y_hat = _check_pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


@dataclass(frozen=True)
class FoldMetrics:
    fold: int
    r2: float  # NaN when the fold's targets are constant
    rmse: float
    mae: float
    n_samples: int


@dataclass(frozen=True, eq=False)
class EvalResult:
    r2: float
    rmse: float
    mae: float
    n_samples: int
    per_fold: list[FoldMetrics] = field(default_factory=list)
    predictions: np.ndarray | None = None  # out-of-fold, aligned with the input rows


def _fold_metrics(fold: int, y, y_hat) -> FoldMetrics:
    try:
        fold_r2 = r2(y, y_hat)
    except ValidationError:
        fold_r2 = float("nan")
    return FoldMetrics(fold, fold_r2, rmse(y, y_hat), mae(y, y_hat), len(y))


def cross_validate(matrix: FeatureMatrix, targets, plan: FoldPlan,
                   params: ForestParams = ForestParams()) -> EvalResult:
    """Out-of-fold predictions for every row, fitting one forest per held-out station group.

    Missing entries are imputed with medians of the training rows of each fold.
    Headline metrics pool all out-of-fold predictions. Rows are put in
    (station, date) order before fitting, so the input row order never matters.
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != (len(matrix),):
        raise ValidationError(f"{len(matrix)} rows but {y.shape} targets")
    order = sorted(range(len(y)), key=matrix.provenance.__getitem__)
    if order != list(range(len(y))):
        canon = FeatureMatrix(matrix.column_names, matrix.values[order],
                              [matrix.provenance[i] for i in order])
        res = cross_validate(canon, y[order], plan, params)
        oof = np.empty_like(res.predictions)
        oof[order] = res.predictions
        return EvalResult(res.r2, res.rmse, res.mae, res.n_samples, res.per_fold, oof)
    stations = matrix.stations
    unknown = sorted(set(stations) - set(plan.assignment))
    if unknown:
        raise ValidationError(f"stations missing from the fold plan: {unknown[:5]}")
    fold_of_row = np.array([plan.assignment[s] for s in stations], dtype=np.int64)
    oof = np.full(len(y), np.nan)
    per_fold: list[FoldMetrics] = []
    for fold in range(plan.k):
        test = fold_of_row == fold
        train = ~test
        if not test.any():
            log.warning("fold %d has no test rows; skipped", fold)
            continue
        if set(stations[train]) & set(stations[test]):
            raise LeakageError(f"fold {fold}: stations appear in both train and test")
        if train.sum() < 2:
            raise ValidationError(f"fold {fold}: fewer than 2 training rows")
        medians = column_medians(matrix.values[train])
        X_train = impute(matrix.values[train], medians)
        X_test = impute(matrix.values[test], medians)
        forest = fit_forest(X_train, y[train], params, matrix.column_names, medians)
        oof[test] = predict(forest, X_test)
        per_fold.append(_fold_metrics(fold, y[test], oof[test]))
    if not per_fold:
        raise ValidationError("every fold is empty; nothing to evaluate")
    done = ~np.isnan(oof)
    return EvalResult(r2(y[done], oof[done]), rmse(y[done], oof[done]), mae(y[done], oof[done]),
                      int(done.sum()), per_fold, oof)

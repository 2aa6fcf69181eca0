"""Runs experiment grids: matching, assembly and grouped CV per dataset row."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from smest.core import ConfigError, SmestError
from smest.evaluation import FoldPlan, cross_validate, make_group_folds
from smest.experiments.config import RunConfig
from smest.experiments.data import Dataset, load_dataset
from smest.experiments.report import ExperimentReport, ReportRow
from smest.experiments.specs import DatasetSpec, e1_specs, e2_specs, e3_specs
from smest.features import FeatureMatrix, assemble, write_feature_csv
from smest.forest import ForestParams
from smest.matching import MatchStats, OrbitConfig, build_samples

log = logging.getLogger(__name__)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


class SampleCache:
    """Matched samples keyed by the matching strategy combination."""

    def __init__(self, data: Dataset, config: RunConfig):
        self.data = data
        self.config = config
        self._cache: dict = {}

    def get(self, spec: DatasetSpec):
        s2 = spec.s2_strategy if spec.needs_s2 else None
        s1 = spec.s1_strategy if spec.use_s1 else None
        orbit = spec.orbit if spec.use_s1 else None
        key = (s2, s1, orbit)
        if key not in self._cache:
            stats = MatchStats()
            samples = build_samples(self.data.measurements, self.data.index, s2, s1,
                                    orbit if orbit is not None else OrbitConfig.DESC,
                                    max_gap_days=self.config.prev_max_gap_days, stats=stats)
            self._cache[key] = (samples, stats)
        return self._cache[key]


def build_matrix(spec: DatasetSpec, data: Dataset, config: RunConfig,
                 cache: SampleCache | None = None) -> tuple[FeatureMatrix, np.ndarray, MatchStats]:
    spec = spec.with_window(config.match_window_days)
    cache = cache or SampleCache(data, config)
    samples, stats = cache.get(spec)
    matrix, y = assemble(samples, spec, spec.era5_lookback, data.era5, data.embeddings,
                         window=config.window)
    return matrix, y, stats


def _evaluate(args):
    """Cross-validate one row; a data problem comes back as its message so the row is skipped."""
    matrix, y, plan, params = args
    try:
        return cross_validate(matrix, y, plan, params)
    except SmestError as exc:
        if isinstance(exc, ConfigError):
            raise
        return str(exc)


def run_specs(experiment: str, specs: Sequence[DatasetSpec], data: Dataset, config: RunConfig,
              dump_features: str | Path | None = None) -> ExperimentReport:
    plan: FoldPlan = make_group_folds(data.stations.ids, config.folds, config.seed)
    params: ForestParams = config.forest_params()
    cache = SampleCache(data, config)
    rows: list[ReportRow] = []
    jobs = []
    for spec in specs:
        matrix, y, stats = build_matrix(spec, data, config, cache)
        row = ReportRow(spec, None, n_columns=len(matrix.column_names))
        rows.append(row)
        if len(matrix) == 0:
            row.skipped = (f"no samples matched ({stats.dropped_s2} without S2, "
                           f"{stats.dropped_s1} without S1 of {stats.total})")
            continue
        if np.ptp(y) == 0:
            row.skipped = "targets are constant; r2 undefined"
            continue
        if dump_features is not None:
            out = Path(dump_features)
            out.mkdir(parents=True, exist_ok=True)
            write_feature_csv(out / f"{experiment}_{_slug(spec.label)}_lag{spec.era5_lookback}.csv",
                              matrix, y)
        jobs.append((row, (matrix, y, plan, params)))

    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_evaluate, [j[1] for j in jobs]))
    else:
        results = []
        for row, args in jobs:
            log.info("%s: evaluating %s (lag %d)", experiment, row.spec.label, row.spec.era5_lookback)
            results.append(_evaluate(args))
    for (row, _), res in zip(jobs, results):
        if isinstance(res, str):
            row.skipped = res
        else:
            row.result = res
    return ExperimentReport(experiment, rows, config.snapshot(), dict(data.summary))


def run_e1(config: RunConfig, data: Dataset | None = None, dump_features=None) -> ExperimentReport:
    data = data or load_dataset(config.data_dir, config.dedup_km)
    return run_specs("E1", e1_specs(config.lookback), data, config, dump_features)


def run_e2(config: RunConfig, data: Dataset | None = None, dump_features=None) -> ExperimentReport:
    data = data or load_dataset(config.data_dir, config.dedup_km)
    return run_specs("E2", e2_specs(config.lag_min, config.lag_max), data, config, dump_features)


def run_e3(config: RunConfig, data: Dataset | None = None, dump_features=None) -> ExperimentReport:
    data = data or load_dataset(config.data_dir, config.dedup_km, require_embeddings=True)
    if data.embeddings is None:
        raise ConfigError("E3 needs an embeddings table (embeddings.csv)")
    return run_specs("E3", e3_specs(config.lookback), data, config, dump_features)

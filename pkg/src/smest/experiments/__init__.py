"""Experiment grids, synthetic data, configuration and reports."""

from smest.experiments.config import RunConfig, parse_config_text, resolve_config
from smest.experiments.data import Dataset, load_dataset
from smest.experiments.report import (
    ExperimentReport,
    ReportRow,
    emit_report,
    fmt4,
    lag_curve_csv,
    load_report_json,
    results_csv,
    results_markdown,
)
from smest.experiments.runner import build_matrix, run_e1, run_e2, run_e3, run_specs
from smest.experiments.specs import (
    BEST_E1_LABEL,
    E1_LABELS,
    E3_LABELS,
    DatasetSpec,
    e1_specs,
    e2_specs,
    e3_specs,
    parse_label,
)
from smest.experiments.synth import SynthConfig, generate_synthetic

__all__ = [
    "BEST_E1_LABEL", "Dataset", "DatasetSpec", "E1_LABELS", "E3_LABELS", "ExperimentReport",
    "ReportRow", "RunConfig", "SynthConfig", "build_matrix", "e1_specs", "e2_specs", "e3_specs",
    "emit_report", "fmt4", "generate_synthetic", "lag_curve_csv", "load_dataset",
    "load_report_json", "parse_config_text", "parse_label", "resolve_config", "results_csv",
    "results_markdown", "run_e1", "run_e2", "run_e3", "run_specs",
]

"""Experiment reports: ``results.csv``, ``results.md``, ``report.json`` and ``lag_curve.csv``."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from smest.core import DataIOError, ValidationError
from smest.evaluation import EvalResult
from smest.experiments.specs import DatasetSpec

FORMAT_VERSION = 1
RESULT_COLUMNS = ["dataset", "strategy_s2", "strategy_s1", "orbit", "era5_lag",
                  "r2", "rmse", "mae", "n_samples", "seed"]


def fmt4(x: float) -> str:
    """Four decimals, rounding half to even on the shortest decimal form of ``x``."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    q = Decimal(repr(float(x))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN)
    return f"{q:.4f}"


@dataclass
class ReportRow:
    spec: DatasetSpec
    result: EvalResult | None
    n_columns: int = 0
    skipped: str | None = None

    @property
    def key(self) -> tuple[str, int]:
        return (self.spec.label, self.spec.era5_lookback)


@dataclass
class ExperimentReport:
    experiment: str
    rows: list[ReportRow]
    config: dict
    data_summary: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        keys = [r.key for r in self.rows]
        if len(keys) != len(set(keys)):
            raise ValidationError("report rows must have unique (label, lag) keys")

    @property
    def seed(self) -> int:
        return int(self.config.get("seed", 0))

    def evaluated(self) -> list[ReportRow]:
        return [r for r in self.rows if r.result is not None]

    def row(self, label: str, lag: int | None = None) -> ReportRow:
        for r in self.rows:
            if r.spec.label == label and (lag is None or r.spec.era5_lookback == lag):
                return r
        raise KeyError(label)

    def lag_curve(self) -> list[tuple[int, float, float, float]]:
        return sorted((r.spec.era5_lookback, r.result.r2, r.result.rmse, r.result.mae)
                      for r in self.evaluated())


def results_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in report.evaluated():
        s, res = r.spec, r.result
        w.writerow([s.label, s.s2_label, s.s1_label, s.orbit_label, s.era5_lookback,
                    fmt4(res.r2), fmt4(res.rmse), fmt4(res.mae), res.n_samples, report.seed])
    return buf.getvalue()


def results_markdown(report: ExperimentReport) -> str:
    show_lag = len({r.spec.era5_lookback for r in report.rows}) > 1
    header = ["Dataset"] + (["ERA5 lag"] if show_lag else []) + ["R²", "RMSE", "MAE", "n"]
    body = []
    for r in report.rows:
        lag = [str(r.spec.era5_lookback)] if show_lag else []
        if r.result is None:
            body.append([r.spec.label] + lag + ["-", "-", "-", f"skipped: {r.skipped}"])
        else:
            res = r.result
            body.append([r.spec.label] + lag + [fmt4(res.r2), fmt4(res.rmse), fmt4(res.mae),
                                                str(res.n_samples)])
    widths = [max(len(header[i]), *(len(b[i]) for b in body)) if body else len(header[i])
              for i in range(len(header))]

    def line(cells):
        out = []
        for i, c in enumerate(cells):
            out.append(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i]))
        return "| " + " | ".join(out) + " |"

    rule = "|" + "|".join(("-" * (w + 1) + ":") if i else (":" + "-" * (w + 1))
                          for i, w in enumerate(widths)) + "|"
    title = f"# {report.experiment}: performance metrics (pooled out-of-fold, seed {report.seed})"
    notes = "All configurations include ERA5 variables."
    return "\n".join([title, "", notes, "", line(header), rule] + [line(b) for b in body]) + "\n"


def lag_curve_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag", "r2", "rmse", "mae"])
    for lag, r2, rmse, mae in report.lag_curve():
        w.writerow([lag, fmt4(r2), fmt4(rmse), fmt4(mae)])
    return buf.getvalue()


def report_json(report: ExperimentReport) -> dict:
    rows = []
    for r in report.rows:
        entry = {"dataset": r.spec.label, "era5_lag": r.spec.era5_lookback,
                 "strategy_s2": r.spec.s2_label, "strategy_s1": r.spec.s1_label,
                 "orbit": r.spec.orbit_label, "n_columns": r.n_columns}
        if r.result is None:
            entry["skipped"] = r.skipped
        else:
            res = r.result
            entry.update(r2=res.r2, rmse=res.rmse, mae=res.mae, n_samples=res.n_samples,
                         per_fold=[{"fold": f.fold, "r2": None if math.isnan(f.r2) else f.r2,
                                    "rmse": f.rmse, "mae": f.mae, "n_samples": f.n_samples}
                                   for f in res.per_fold])
        rows.append(entry)
    return {"format_version": report.format_version, "experiment": report.experiment,
            "aggregation": "pooled out-of-fold", "config": report.config,
            "data_summary": report.data_summary, "rows": rows}


def emit_report(report: ExperimentReport, out_dir) -> list[Path]:
    if not report.rows:
        raise ValidationError("refusing to emit an empty report")
    out = Path(out_dir)
    files = {"results.csv": results_csv(report), "results.md": results_markdown(report),
             "report.json": json.dumps(report_json(report), indent=2, sort_keys=True) + "\n"}
    if report.experiment == "E2":
        files["lag_curve.csv"] = lag_curve_csv(report)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            path = out / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
    except OSError as exc:
        raise DataIOError(f"cannot write report to {out}: {exc}") from exc
    return written


def load_report_json(in_dir) -> dict:
    path = Path(in_dir) / "report.json"
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from None
    if data.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported report format {data.get('format_version')}")
    return data

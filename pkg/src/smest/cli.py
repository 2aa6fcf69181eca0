"""Command-line entry point ``smest``.

Exit codes: 0 success, 1 validation error, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from smest.core import DataIOError, SmestError, ValidationError, from_epoch_day
from smest.experiments.config import resolve_config
from smest.experiments.data import load_dataset
from smest.experiments.report import emit_report, fmt4, load_report_json
from smest.experiments.runner import build_matrix, run_e1, run_e2, run_e3
from smest.experiments.specs import BEST_E1_LABEL, parse_label
from smest.experiments.synth import SynthConfig, generate_synthetic
from smest.features import column_medians, impute, read_feature_csv
from smest.forest import check_schema, fit_forest, load_forest, predict, save_forest

log = logging.getLogger("smest")

_RUNNERS = {"run-e1": run_e1, "run-e2": run_e2, "run-e3": run_e3}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smest", description="Soil-moisture estimation experiments.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("ingest-validate", help="load and validate a data directory")
    v.add_argument("--data-dir", required=True)
    v.add_argument("--dedup-km", type=float, default=None)
    v.add_argument("--config")

    g = sub.add_parser("synth-gen", help="write a synthetic oracle dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--stations", type=int, default=30)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--true-lag", type=int, default=6)
    g.add_argument("--days", type=int, default=180)
    g.add_argument("--patch-size", type=int, default=32)
    g.add_argument("--no-embeddings", action="store_true")
    g.add_argument("--no-decoys", action="store_true")

    for name in _RUNNERS:
        r = sub.add_parser(name, help=f"run experiment {name[-2:].upper()}")
        r.add_argument("--data-dir")
        r.add_argument("--out")
        r.add_argument("--config")
        r.add_argument("--seed", type=int)
        r.add_argument("--folds", type=int)
        r.add_argument("--trees", type=int)
        r.add_argument("--lookback", type=int)
        r.add_argument("--lag-min", type=int)
        r.add_argument("--lag-max", type=int)
        r.add_argument("--window", type=int)
        r.add_argument("--workers", type=int)
        r.add_argument("--dump-features", metavar="PATH")

    t = sub.add_parser("train", help="fit a forest on one dataset configuration and save it")
    t.add_argument("--data-dir")
    t.add_argument("--config")
    t.add_argument("--dataset", default=BEST_E1_LABEL, help="dataset label, e.g. 'S2_curr_day'")
    t.add_argument("--lookback", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--trees", type=int)
    t.add_argument("--window", type=int)
    t.add_argument("--model", required=True, help="output model file")

    pr = sub.add_parser("predict", help="apply a saved forest to a feature CSV")
    pr.add_argument("--model", required=True)
    pr.add_argument("--features", required=True, help="CSV as written by --dump-features")
    pr.add_argument("--out", required=True)

    rep = sub.add_parser("report", help="print the results table of a finished run")
    rep.add_argument("--in", dest="in_dir", required=True)
    return p


def _run(args) -> dict:
    overrides = {k: getattr(args, k) for k in ("data_dir", "out", "seed", "folds", "trees", "lookback",
                                                "lag_min", "lag_max", "window", "workers")}
    config = resolve_config(args.config, **overrides)
    report = _RUNNERS[args.command](config, dump_features=args.dump_features)
    written = emit_report(report, config.out)
    skipped = [r.spec.label for r in report.rows if r.result is None]
    for label in skipped:
        log.warning("row %r skipped: %s", label, report.row(label).skipped)
    return {"experiment": report.experiment, "rows": len(report.rows), "skipped": len(skipped),
            "files": [str(w) for w in written]}


def _train(args) -> dict:
    config = resolve_config(args.config, data_dir=args.data_dir, lookback=args.lookback, seed=args.seed,
                            trees=args.trees, window=args.window)
    spec = parse_label(args.dataset, config.lookback)
    data = load_dataset(config.data_dir, config.dedup_km, require_embeddings=spec.use_embeddings)
    matrix, y, _ = build_matrix(spec, data, config)
    if len(matrix) < 2:
        raise ValidationError(f"dataset {spec.label!r} matched {len(matrix)} samples; need at least 2")
    medians = column_medians(matrix.values)
    forest = fit_forest(impute(matrix.values, medians), y, config.forest_params(),
                        matrix.column_names, medians)
    save_forest(args.model, forest)
    return {"model": args.model, "dataset": spec.label, "rows": len(matrix),
            "columns": len(matrix.column_names)}


def _predict(args) -> dict:
    forest = load_forest(args.model)
    matrix, _ = read_feature_csv(args.features)
    check_schema(forest, matrix.column_names)
    y_hat = predict(forest, impute(matrix.values, forest.imputation_medians))
    try:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["station_id", "date", "sm_pred"])
            for (sid, day), v in zip(matrix.provenance, y_hat):
                w.writerow([sid, from_epoch_day(day).isoformat(), repr(float(v))])
    except OSError as exc:
        raise DataIOError(f"cannot write {args.out}: {exc}") from exc
    return {"predictions": len(y_hat), "out": args.out}


def _report_table(data: dict) -> str:
    lines = [f"{data['experiment']} ({data['aggregation']}, seed {data['config'].get('seed')})",
             f"{'dataset':<45} {'lag':>3} {'r2':>8} {'rmse':>8} {'mae':>8} {'n':>6}"]
    for row in data["rows"]:
        if "skipped" in row:
            lines.append(f"{row['dataset']:<45} {row['era5_lag']:>3}  skipped: {row['skipped']}")
        else:
            lines.append(f"{row['dataset']:<45} {row['era5_lag']:>3} {fmt4(row['r2']):>8} "
                         f"{fmt4(row['rmse']):>8} {fmt4(row['mae']):>8} {row['n_samples']:>6}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "ingest-validate":
            config = resolve_config(args.config, data_dir=args.data_dir, dedup_km=args.dedup_km)
            data = load_dataset(config.data_dir, config.dedup_km)
            print(json.dumps(data.summary, indent=2, sort_keys=True))
        elif args.command == "synth-gen":
            cfg = SynthConfig(stations=args.stations, noise=args.noise, true_lag=args.true_lag,
                              days=args.days, patch_size=args.patch_size,
                              embeddings=not args.no_embeddings, decoys=not args.no_decoys)
            manifest = generate_synthetic(cfg, args.seed, args.out)
            print(json.dumps(manifest["counts"], sort_keys=True))
        elif args.command in _RUNNERS:
            print(json.dumps(_run(args), sort_keys=True))
        elif args.command == "train":
            print(json.dumps(_train(args), sort_keys=True))
        elif args.command == "predict":
            print(json.dumps(_predict(args), sort_keys=True))
        elif args.command == "report":
            print(_report_table(load_report_json(args.in_dir)))
    except SmestError as exc:
        print(f"smest: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

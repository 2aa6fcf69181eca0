"""Acceptance criteria, one test each.

Every test prints a single ``[ACCEPT n] PASS|FAIL <name>: <detail> (<seconds> s)``
line (also visible without ``-s``) and then asserts the criterion.
"""

import datetime as dt
import json
import math
import os
import time

import numpy as np
import pytest

from smest.cli import main
from smest.core import RngStream
from smest.evaluation import cross_validate, mae, make_group_folds, r2, rmse
from smest.experiments import SynthConfig, generate_synthetic
from smest.experiments.config import resolve_config
from smest.experiments.data import load_dataset
from smest.experiments.runner import run_e1, run_specs
from smest.experiments.specs import parse_label
from smest.features import FeatureMatrix, spectral_indices
from smest.forest import ForestParams, best_split
from smest.ingestion import BandId, Orbit, Patch, Sensor, cloud_fraction, decode_patch, encode_patch
from smest.ingestion.codec import PatchFormatError
from smest.ingestion.loaders import dedup_stations
from smest.matching import MatchStrategy, match_one, previous_match

from conftest import D0, acq
from oracles import brute_force_split

S2_BANDS = [b for b in BandId if b not in (BandId.VV, BandId.VH)]
# the slow criteria evaluate dataset rows on every CPU available to the process
WORKERS = str(len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


@pytest.fixture
def verdict(capsys):
    """Print the PASS/FAIL line for a criterion, then assert it."""
    t0 = time.perf_counter()

    def emit(n, name, ok, detail="", budget=None):
        took = time.perf_counter() - t0
        over = budget is not None and took > budget
        note = f" [over the {budget:g} s budget]" if over else ""
        with capsys.disabled():
            print(f"\n[ACCEPT {n}] {'PASS' if ok else 'FAIL'} {name}: {detail} ({took:.1f} s){note}")
        assert ok, f"criterion {n} failed: {detail}"

    return emit


@pytest.fixture(scope="session")
def oracle_data(tmp_path_factory):
    """``synth-gen --stations 30 --noise 0 --true-lag 6`` through the CLI."""
    root = tmp_path_factory.mktemp("oracle")
    data = root / "noise0"
    assert main(["synth-gen", "--out", str(data), "--seed", "0", "--stations", "30",
                 "--noise", "0", "--true-lag", "6"]) == 0
    return data


def test_1_metric_closed_forms(verdict):
    y, y_hat = [0, 0.2, 0.4], [0.1, 0.2, 0.3]
    errs = [abs(r2(y, y_hat) - 0.75), abs(mae(y, y_hat) - 0.2 / 3), abs(rmse(y, y_hat) - math.sqrt(0.02 / 3))]
    yy = np.array([0.05, 0.3, 0.21, 0.44, 0.12])
    identities = (r2(yy, yy) == 1.0 and rmse(yy, yy) == 0.0 and mae(yy, yy) == 0.0
                  and r2(yy, np.full(5, yy.mean())) == 0.0)
    ok = max(errs) <= 1e-12 and identities and round(mae(y, y_hat), 4) == 0.0667 \
        and round(rmse(y, y_hat), 4) == 0.0816
    verdict(1, "metric closed forms", ok, f"max abs err {max(errs):.2e}, identities {identities}", 1)


def test_2_index_formulas(verdict):
    rng = np.random.default_rng(2)
    failures = 0
    worst = 0.0
    for _ in range(1000):
        v = rng.uniform(1e-4, 1.0, 5)
        b3, b4, b8, b11, b8a = v
        means = {BandId.B03: b3, BandId.B04: b4, BandId.B08: b8, BandId.B11: b11, BandId.B8A: b8a}
        got = spectral_indices(means)
        want = ((b8 - b4) / (b8 + b4), (b3 - b8) / (b3 + b8), (b8 - b11) / (b8 + b11), b11 / b8a)
        worst = max(worst, max(abs(g - w) for g, w in zip(got.as_tuple(), want)))
        swapped = spectral_indices({BandId.B03: b8, BandId.B04: b8, BandId.B08: b4, BandId.B11: b8,
                                    BandId.B8A: b8a})
        anti_ndvi = abs(swapped.ndvi + got.ndvi) <= 1e-12
        swapped = spectral_indices({BandId.B03: b8, BandId.B08: b3, BandId.B11: b8, BandId.B04: b4,
                                    BandId.B8A: b8a})
        anti_ndwi = abs(swapped.ndwi + got.ndwi) <= 1e-12
        swapped = spectral_indices({BandId.B08: b11, BandId.B11: b8, BandId.B03: b3, BandId.B04: b4,
                                    BandId.B8A: b8a})
        anti_ndmi = abs(swapped.ndmi + got.ndmi) <= 1e-12
        bounded = all(-1 <= x <= 1 for x in got.as_tuple()[:3]) and got.msi >= 0
        if not (bounded and anti_ndvi and anti_ndwi and anti_ndmi):
            failures += 1
    ok = failures == 0 and worst <= 1e-12
    verdict(2, "index formulas", ok, f"1000 vectors, {failures} property failures, max err {worst:.1e}", 1)


def _cart_instance(rng):
    n = int(rng.integers(2, 31))
    p = int(rng.integers(1, 5))
    if rng.random() < 0.5:  # small integer grids produce tied gains and duplicate values
        return rng.integers(0, 3, (n, p)).astype(float), rng.integers(0, 3, n).astype(float)
    return rng.normal(size=(n, p)), rng.normal(size=n)


def test_3_cart_oracle(verdict):
    rng = np.random.default_rng(3)
    mismatches = 0
    ties = 0
    for _ in range(200):
        X, y = _cart_instance(rng)
        got = best_split(X, y)
        want = brute_force_split(X, y)
        if want is not None and X.shape[1] > 1:
            ties += int(np.unique(X, axis=1).shape[1] < X.shape[1])
        same = (got is None and want is None) or (
            got is not None and want is not None and (got.feature, got.threshold) == want[:2]
            and math.isclose(got.score, want[2], rel_tol=1e-9, abs_tol=1e-12))
        mismatches += not same
    verdict(3, "CART oracle equivalence", mismatches == 0,
            f"200 instances, {mismatches} mismatches, {ties} with duplicated columns", 10)


def test_4_cv_leakage(verdict):
    ids = [f"S{i:03d}" for i in range(113)]
    plan = make_group_folds(ids, 5, 0)
    sizes = sorted(plan.sizes(), reverse=True)
    disjoint = all(not (plan.stations_in(f) & (set(ids) - plan.stations_in(f))) for f in range(5))
    rng = np.random.default_rng(4)
    prov = [(ids[i % 113], 18000 + i // 113) for i in range(339)]
    matrix = FeatureMatrix(["a", "b"], rng.normal(size=(339, 2)), prov)
    res = cross_validate(matrix, rng.normal(size=339), plan, ForestParams(n_trees=3))
    ok = sizes == [23, 23, 23, 22, 22] and disjoint and res.n_samples == 339
    verdict(4, "CV leakage", ok, f"fold sizes {sizes}, disjoint {disjoint}, predicted {res.n_samples}/339", 1)


def _random_patch(rng, big=False):
    if big or rng.random() < 0.5:
        size = 256 if big else int(rng.choice([16, 32, 64]))
        bands = sorted(rng.choice(S2_BANDS[:-1], int(rng.integers(1, 13)), replace=False).tolist())
        bands = [BandId(b) for b in bands] + [BandId.SCL]
        px = rng.random((len(bands), size, size)).astype(np.float32)
        px[-1] = rng.integers(0, 12, (size, size))
        return Patch(Sensor.S2, Orbit.NONE, dt.date(2020, 1, 1) + dt.timedelta(int(rng.integers(0, 2000))),
                     tuple(bands), px)
    size = int(rng.choice([16, 32, 48]))
    return Patch(Sensor.S1, Orbit(int(rng.integers(1, 3))), dt.date(2019, 6, 1), (BandId.VV, BandId.VH),
                 rng.gamma(2.0, 0.02, (2, size, size)).astype(np.float32))


def test_5_patch_codec(verdict):
    rng = np.random.default_rng(5)
    bad = 0
    for i in range(500):
        patch = _random_patch(rng, big=i < 5)
        blob = encode_patch(patch)
        back = decode_patch(blob)
        bad += not (back == patch and encode_patch(back) == blob)
    blob = encode_patch(_random_patch(rng))
    try:
        decode_patch(blob[:-4])
        truncation = False
    except PatchFormatError as exc:
        truncation = f"expected {len(blob)} bytes, got {len(blob) - 4}" in str(exc)
    s2 = bytearray(encode_patch(Patch(Sensor.S2, Orbit.NONE, dt.date(2020, 1, 1), (BandId.B02,),
                                      np.zeros((1, 16, 16), np.float32))))
    s2[17] = int(BandId.VV)
    try:
        decode_patch(bytes(s2))
        mismatch = False
    except PatchFormatError as exc:
        mismatch = "mismatch" in str(exc)
    ok = bad == 0 and truncation and mismatch
    verdict(5, "patch codec", ok,
            f"500 patches (5 at 256x256 with SCL), {bad} round-trip failures, truncation error {truncation}, "
            f"band mismatch error {mismatch}", 5)


def _lag_curve(out_dir):
    rows = json.loads((out_dir / "report.json").read_text())["rows"]
    return {r["era5_lag"]: r["r2"] for r in rows if "r2" in r}


@pytest.mark.slow
def test_6_end_to_end_oracle(verdict, oracle_data, tmp_path):
    noisy = tmp_path / "noise002"
    assert main(["synth-gen", "--out", str(noisy), "--seed", "0", "--stations", "30",
                 "--noise", "0.02", "--true-lag", "6"]) == 0
    curves = []
    for data in (oracle_data, noisy):
        out = tmp_path / f"e2_{data.name}"
        assert main(["run-e2", "--data-dir", str(data), "--out", str(out), "--seed", "0",
                     "--workers", WORKERS]) == 0
        curves.append(_lag_curve(out))
    clean, dirty = curves
    argmax = max(clean, key=clean.get)
    best_noisy = max(dirty.values())
    ok = clean[6] >= 0.95 and argmax in (5, 6, 7) and best_noisy >= 0.6
    verdict(6, "end-to-end synthetic oracle", ok,
            f"r2@6={clean[6]:.4f} argmax={argmax} noisy_best={best_noisy:.4f} "
            f"(noisy argmax {max(dirty, key=dirty.get)})", 300)


@pytest.mark.slow
def test_7_orbit_ordering(verdict, tmp_path):
    worse = []
    compared = 0
    for seed in (0, 1, 2):
        data = tmp_path / f"s{seed}"
        # passes of both orbits share days, so each pair differs only in SAR noise (DESC:ASC = 1:2)
        generate_synthetic(SynthConfig(stations=15, days=150, noise=0.02), seed, data)
        report = run_e1(resolve_config(None, data_dir=str(data), out=str(tmp_path / "o"), seed=seed,
                                       workers=int(WORKERS)))
        scores = {r.spec.label: r.result.r2 for r in report.evaluated()}
        for label, score in scores.items():
            if "DESC" in label:
                asc = scores[label.replace("DESC", "ASC")]
                compared += 1
                if score < asc:
                    worse.append(f"seed {seed} {label}: {score:.4f} < {asc:.4f}")
    verdict(7, "orbit ordering", not worse,
            f"{compared} DESC/ASC pairs over 3 seeds, violations: {worse or 'none'}", 600)


E3_PAIRS = [
    ("Prithvi_S2", "S2_curr_day"),
    ("Prithvi_S2 + S1_DESC_closest", "S2_curr_day + S1_DESC_closest"),
    ("Prithvi_S2 + indices + S1_DESC_closest", "S2_curr_day + S1_DESC_closest"),
]


@pytest.mark.slow
def test_8_e3_equivalence(verdict, oracle_data, tmp_path):
    config = resolve_config(None, data_dir=str(oracle_data), out=str(tmp_path), seed=0, workers=int(WORKERS))
    data = load_dataset(oracle_data, require_embeddings=True)
    labels = list(dict.fromkeys(label for pair in E3_PAIRS for label in pair))
    report = run_specs("E3", [parse_label(label) for label in labels], data, config)
    scores = {r.spec.label: r.result.r2 for r in report.evaluated()}
    gaps = {emb: scores[emb] - scores[hand] for emb, hand in E3_PAIRS}
    worst = max(abs(g) for g in gaps.values())
    detail = ", ".join(f"{emb}: {scores[emb]:.4f} vs {scores[hand]:.4f}" for emb, hand in E3_PAIRS)
    verdict(8, "E3 equivalence", worst <= 0.05, f"max |dR2| {worst:.4f}; {detail}", 300)


@pytest.mark.slow
def test_9_determinism(verdict, tmp_path):
    data = tmp_path / "data"
    assert main(["synth-gen", "--out", str(data), "--seed", "9", "--stations", "10", "--days", "120",
                 "--noise", "0.02"]) == 0
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run-e1", "--data-dir", str(data), "--out", str(out), "--seed", "7",
                     "--workers", WORKERS]) == 0
        outputs.append((out / "results.csv").read_bytes())
    same = outputs[0] == outputs[1]
    rows = outputs[0].count(b"\n") - 1
    verdict(9, "determinism", same,
            f"two E1 runs ({rows} rows), results.csv {len(outputs[0])} bytes, byte-identical {same}")


def _st(sid, lat, lon):
    from smest.core import LandCover, Station
    return Station(sid, "N", lat, lon, LandCover.CROPLAND)


def test_10_dedup_and_matching_examples(verdict):
    from smest.core import Measurement, MeasurementTable, StationTable

    def dedup(stations, counts):
        ms = [Measurement(s.station_id, dt.date(2020, 1, 1) + dt.timedelta(days=i), 0.2)
              for s, c in zip(stations, counts) for i in range(c)]
        return sorted(dedup_stations(StationTable(stations), MeasurementTable(ms), 1.0).ids)

    km = 180 / (6371.0 * math.pi)  # degrees of latitude per km
    checks = {
        "dedup 0.5 km keeps busier": dedup([_st("A", 0, 0), _st("B", 0.5 * km, 0)], [50, 100]) == ["B"],
        "dedup 1.5 km keeps both": dedup([_st("A", 0, 0), _st("B", 1.5 * km, 0)], [5, 5]) == ["A", "B"],
        "dedup chain": dedup([_st("A", 0, 0), _st("B", 0.8 * km, 0), _st("C", 1.6 * km, 0)], [3, 3, 3])
        == ["A", "C"],
    }
    closest = MatchStrategy.closest(10)
    pool = [acq(D0 - 3), acq(D0 + 2)]
    checks["closest nearer future"] = match_one(pool, D0, closest).day == D0 + 2
    checks["closest tie prefers past"] = match_one([acq(D0 - 3), acq(D0 + 3)], D0, closest).day == D0 - 3
    checks["closest outside window"] = match_one([acq(D0 - 11)], D0, closest) is None
    checks["current day"] = match_one([acq(D0 - 1), acq(D0)], D0, MatchStrategy.current_day()).day == D0
    checks["previous within gap"] = previous_match([acq(D0 - 40), acq(D0 - 5), acq(D0)], D0).day == D0 - 5
    checks["previous gap bound"] = previous_match([acq(D0 - 40), acq(D0)], D0) is None
    checks["previous strict"] = previous_match([acq(D0)], D0) is None

    def s2(scl):
        px = np.zeros((2, *scl.shape), np.float32)
        px[1] = scl
        return Patch(Sensor.S2, Orbit.NONE, dt.date(2020, 1, 1), (BandId.B04, BandId.SCL), px)

    checks["cloud clear"] = cloud_fraction(s2(np.full((16, 16), 4))) == 0.0
    checks["cloud full"] = cloud_fraction(s2(np.full((16, 16), 9))) == 1.0
    scl = np.full(256 * 256, 4)
    scl[RngStream(10, 0).permutation(scl.size)[:13108]] = 8
    frac = cloud_fraction(s2(scl.reshape(256, 256)))
    checks["cloud 13108/65536 excluded"] = frac == 13108 / 65536 and frac > 0.20
    failed = [k for k, v in checks.items() if not v]
    verdict(10, "dedup and matching examples", not failed,
            f"{len(checks) - len(failed)}/{len(checks)} examples, failed: {failed or 'none'}", 1)

"""Synthetic oracle datasets with a known soil-moisture generating function.

Ground truth per station and day ``t``::

    sm(t) = clip(a0 + a1*NDVI(t) + a2*R(t) + a3*mean(precip[t-L .. t]) + eps, 0, 1)

where ``R`` is the true VH/VV ratio seen by the descending pass, ``L`` the
true lag and ``eps ~ N(0, noise)``. Patches are rendered so that the band
means give back NDVI and the ratio; the ascending pass carries twice the
descending calibration noise. Precipitation is in mm/day.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from smest.core import ConfigError, DataIOError, LandCover, parse_date
from smest.ingestion.codec import OPTICAL_BANDS, SAR_BANDS, BandId, Orbit, Patch, Sensor, encode_patch
from smest.ingestion.loaders import (
    EMBEDDING_COLUMNS,
    EMBEDDING_DIM,
    ERA5_COLUMNS,
    MEASUREMENT_COLUMNS,
    STATION_COLUMNS,
    patch_relpath,
)

MANIFEST_FILE = "synth_manifest.json"
_OUTPUT_FILES = ("stations.csv", "measurements.csv", "era5.csv", "embeddings.csv", MANIFEST_FILE)
GENERATOR_VERSION = 1
MAX_LAG = 20

# SCL classes used when painting patches
_SCL_VEGETATION = 4
_SCL_CLOUDS = (8, 9)


@dataclass(frozen=True)
class SynthConfig:
    stations: int = 30
    days: int = 180
    start: str = "2019-04-01"
    noise: float = 0.0
    true_lag: int = 6
    patch_size: int = 32
    s2_revisit: int = 5
    s1_revisit: int = 6
    # days between a descending pass and the following ascending pass; 0 pairs them on the
    # same day so orbit comparisons see identical samples
    asc_offset_days: int = 0
    cloudy_share: float = 0.25
    partly_cloudy_share: float = 0.15
    a0: float = 0.05
    a1: float = 0.3
    a2: float = 0.5
    a3: float = 0.06
    # rain is a censored AR(1) process: wet spells rather than isolated showers
    rain_persistence: float = 0.92
    rain_threshold: float = 0.5
    rain_scale_mm: float = 8.0
    # per-acquisition SAR calibration noise in dB per unit of ``noise``
    sar_db_per_noise: float = 40.0
    asc_noise_factor: float = 2.0
    embeddings: bool = True
    decoys: bool = True

    def __post_init__(self):
        if self.stations < 1:
            raise ConfigError("stations must be >= 1")
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if not 0 <= self.true_lag <= MAX_LAG:
            raise ConfigError(f"true_lag must be in [0, {MAX_LAG}]")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if self.patch_size < 16 or self.patch_size % 2:
            raise ConfigError("patch_size must be an even number >= 16")
        if self.s2_revisit < 1 or self.s1_revisit < 1:
            raise ConfigError("revisit periods must be >= 1 day")
        if not 0 <= self.asc_offset_days < self.s1_revisit:
            raise ConfigError("asc_offset_days must lie in [0, s1_revisit)")
        if not (0 <= self.cloudy_share <= 1 and 0 <= self.partly_cloudy_share <= 1
                and self.cloudy_share + self.partly_cloudy_share <= 1):
            raise ConfigError("cloud shares must lie in [0, 1] and sum to at most 1")
        try:
            parse_date(self.start)
        except ValueError as exc:
            raise ConfigError(f"bad start date: {exc}") from None


@dataclass
class _Station:
    sid: str
    lat: float
    lon: float
    cover: LandCover
    ndvi: np.ndarray
    ratio: np.ndarray
    vv_db: np.ndarray
    precip: np.ndarray
    era5: np.ndarray  # (n_days, 13)
    sm: np.ndarray
    s2_phase: int
    s1_phase: int
    extra: dict = field(default_factory=dict)


def _ar1(rng, n, rho, sd):
    out = np.empty(n)
    x = rng.normal(0.0, sd / np.sqrt(1 - rho * rho))
    for i in range(n):
        x = rho * x + rng.normal(0.0, sd)
        out[i] = x
    return out


def _station_series(cfg: SynthConfig, rng, n_days: int, doy: np.ndarray) -> dict:
    """Daily latent series over the full span, including the lag warm-up."""
    season = np.sin(2 * np.pi * (doy - 80) / 365.0)
    ndvi = (rng.uniform(0.35, 0.55) + rng.uniform(0.1, 0.25) * season
            + _ar1(rng, n_days, 0.95, 0.01))
    ndvi = np.clip(ndvi, 0.05, 0.92)

    t = np.arange(n_days)
    ratio = np.full(n_days, rng.uniform(0.12, 0.22))
    for period in (rng.uniform(90, 130), rng.uniform(180, 260)):
        ratio += rng.uniform(0.03, 0.06) * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    ratio = np.clip(ratio, 0.03, 0.5)

    vv_db = rng.uniform(-13.0, -9.0) + 1.0 * season + _ar1(rng, n_days, 0.9, 0.05)

    rho = cfg.rain_persistence
    latent = _ar1(rng, n_days, rho, np.sqrt(1 - rho * rho))
    precip = cfg.rain_scale_mm * np.maximum(latent - cfg.rain_threshold, 0.0)
    # rainy days are overcast, humid and cool at the surface
    wet = np.log1p(precip)

    def weather(base, amp, sd, rho=0.6):
        return base + amp * season + _ar1(rng, n_days, rho, sd)

    temp_air = weather(rng.uniform(283, 290), 8.0, 2.0)
    era5 = np.column_stack([
        precip,
        temp_air,
        temp_air + 3.0 - 2.0 * wet + _ar1(rng, n_days, 0.3, 0.3),
        weather(rng.uniform(284, 290), 6.0, 0.8, 0.9),
        -np.maximum(weather(4.0, 1.5, 0.2) - 1.0 * wet, 0.1),
        np.clip(weather(rng.uniform(0.2, 0.35), -0.05, 0.02, 0.9), 0.01, 0.99),
        weather(rng.uniform(96000, 101000), 0.0, 400.0, 0.8),
        temp_air - np.maximum(6.0 - 2.0 * wet + _ar1(rng, n_days, 0.3, 0.3), 0.2),
        np.maximum(weather(rng.uniform(1.5, 3.0), 1.0, 0.1, 0.95), 0.0),
        np.maximum(weather(2.0e7, 0.6e7, 0.5e6, 0.4) - 0.5e7 * wet, 1e5),
        np.maximum(weather(3.0e7, 0.3e7, 0.3e6, 0.5) + 0.3e7 * wet, 1e5),
        weather(0.0, 0.0, 2.5, 0.5),
        weather(0.0, 0.0, 2.5, 0.5),
    ])
    return {"ndvi": ndvi, "ratio": ratio, "vv_db": vv_db, "precip": precip, "era5": era5}


def _soil_moisture(cfg: SynthConfig, rng, ndvi, ratio, precip, warmup: int) -> np.ndarray:
    lag = cfg.true_lag
    window = np.convolve(precip, np.ones(lag + 1) / (lag + 1))[:len(precip)]
    sm = cfg.a0 + cfg.a1 * ndvi + cfg.a2 * ratio + cfg.a3 * window
    if cfg.noise > 0:
        sm = sm + rng.normal(0.0, cfg.noise, len(sm))
    sm = np.clip(sm, 0.0, 1.0)
    sm[:warmup] = np.nan
    return sm


def _reflectances(ndvi: float) -> dict[BandId, float]:
    """Optical band reflectances with (B08 - B04) / (B08 + B04) == ndvi."""
    red = 0.09 - 0.06 * ndvi
    nir = red * (1 + ndvi) / (1 - ndvi)
    return {
        BandId.B01: 0.05 + 0.2 * red, BandId.B02: 0.04 + 0.5 * red,
        BandId.B03: 0.05 + 0.4 * red + 0.05 * nir, BandId.B04: red,
        BandId.B05: 0.5 * (red + nir) * 0.7, BandId.B06: 0.75 * nir + 0.05 * red,
        BandId.B07: 0.9 * nir, BandId.B08: nir, BandId.B8A: 0.97 * nir + 0.01,
        BandId.B09: 0.3 * nir, BandId.B11: 0.12 + 0.35 * nir - 0.1 * ndvi,
        BandId.B12: 0.08 + 0.15 * nir - 0.08 * ndvi,
    }


def _s2_patch(cfg: SynthConfig, rng, date, ndvi: float, cloud_cover: float) -> Patch:
    size = cfg.patch_size
    refl = _reflectances(ndvi)
    pixels = np.empty((len(OPTICAL_BANDS) + 1, size, size), dtype=np.float64)
    for i, band in enumerate(OPTICAL_BANDS):
        pixels[i] = refl[band]
    if cfg.noise > 0:
        pixels[:-1] *= 1.0 + rng.normal(0.0, cfg.noise, pixels[:-1].shape)
    scl = np.full((size, size), _SCL_VEGETATION, dtype=np.float64)
    n_cloud = int(round(cloud_cover * size * size))
    if n_cloud:
        cells = rng.permutation(size * size)[:n_cloud]
        scl.flat[cells] = rng.choice(_SCL_CLOUDS, n_cloud)
        if cloud_cover > 0.2:
            for i in range(len(OPTICAL_BANDS)):
                pixels[i].flat[cells] = 0.4 + 0.2 * rng.random(n_cloud)
    pixels[-1] = scl
    return Patch(Sensor.S2, Orbit.NONE, date, OPTICAL_BANDS + (BandId.SCL,), pixels)


def _s1_patch(cfg: SynthConfig, rng, date, orbit: Orbit, vv_db: float, ratio: float) -> Patch:
    size = cfg.patch_size
    sd_db = cfg.noise * cfg.sar_db_per_noise * (cfg.asc_noise_factor if orbit is Orbit.ASC else 1.0)
    vv = 10.0 ** (vv_db / 10.0)
    vh = vv * ratio
    if sd_db > 0:
        vv *= 10.0 ** (rng.normal(0.0, sd_db) / 10.0)
        vh *= 10.0 ** (rng.normal(0.0, sd_db) / 10.0)
    pixels = np.empty((2, size, size))
    pixels[0], pixels[1] = vv, vh
    if sd_db > 0:
        # mild speckle on top of the per-pass calibration error
        pixels *= 1.0 + rng.normal(0.0, 0.05, pixels.shape)
    return Patch(Sensor.S1, orbit, date, SAR_BANDS, pixels)


def _embedding_matrix(rng) -> np.ndarray:
    """768 x 16 map: each output copies one scaled input plus a little mixing."""
    n_in = 16
    m = 0.05 * rng.normal(size=(EMBEDDING_DIM, n_in))
    src = np.arange(EMBEDDING_DIM) % n_in
    rng.shuffle(src)
    m[np.arange(EMBEDDING_DIM), src] += rng.choice([-1.0, 1.0], EMBEDDING_DIM) * rng.uniform(0.5, 2.0, EMBEDDING_DIM)
    return m


def _embedding_inputs(patch: Patch) -> np.ndarray:
    from smest.features import band_means, spectral_indices

    means = band_means(patch, patch.rows)
    vals = [means[b] for b in OPTICAL_BANDS] + list(spectral_indices(means).as_tuple())
    return np.asarray(vals)


def _f(x: float) -> str:
    return repr(round(float(x), 6))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def generate_synthetic(cfg: SynthConfig, seed: int, out) -> dict:
    """Write a complete dataset under ``out`` and return its manifest.

    ``out`` must be empty or hold an earlier synthetic dataset, which is
    replaced; leftover patches would otherwise join the new acquisition index.
    """
    out = Path(out)
    try:
        if out.is_dir() and any(out.iterdir()):
            if not (out / MANIFEST_FILE).is_file():
                raise DataIOError(f"{out} is not empty and holds no synthetic dataset; refusing to overwrite")
            shutil.rmtree(out / "patches", ignore_errors=True)
            for name in _OUTPUT_FILES:
                (out / name).unlink(missing_ok=True)
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise DataIOError(f"cannot write to {out}: {exc}") from exc

    rng = np.random.default_rng(seed)
    start = parse_date(cfg.start)
    warmup = MAX_LAG
    n_days = cfg.days + warmup
    dates = [start + _dt.timedelta(days=i - warmup) for i in range(n_days)]
    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=float)
    vegetated = [c for c in LandCover if c.vegetated]

    stations: list[_Station] = []
    for k in range(cfg.stations):
        series = _station_series(cfg, rng, n_days, doy)
        sm = _soil_moisture(cfg, rng, series["ndvi"], series["ratio"], series["precip"], warmup)
        stations.append(_Station(
            sid=f"SYN{k + 1:03d}", lat=float(rng.uniform(40.0, 52.0)), lon=float(rng.uniform(-5.0, 20.0)),
            cover=vegetated[k % len(vegetated)], sm=sm,
            s2_phase=int(rng.integers(cfg.s2_revisit)), s1_phase=int(rng.integers(cfg.s1_revisit)),
            **series))

    station_rows = [[s.sid, "SYNTH", _f(s.lat), _f(s.lon), s.cover.value] for s in stations]
    measurement_rows = []
    for s in stations:
        for i in range(warmup, n_days):
            measurement_rows.append([s.sid, dates[i].isoformat(), _f(s.sm[i])])
    if cfg.decoys and stations:
        # a non-vegetated site and a near-duplicate of the first station with fewer records
        first = stations[0]
        station_rows.append(["SYNX_OTHER", "SYNTH", _f(first.lat + 1.0), _f(first.lon), LandCover.OTHER.value])
        station_rows.append(["SYNX_TWIN", "SYNTH", _f(first.lat + 0.003), _f(first.lon), first.cover.value])
        for i in range(warmup, n_days, 4):
            measurement_rows.append(["SYNX_OTHER", dates[i].isoformat(), "0.2"])
            measurement_rows.append(["SYNX_TWIN", dates[i].isoformat(), _f(first.sm[i])])

    era5_rows = []
    for s in stations:
        for i in range(n_days):
            era5_rows.append([s.sid, dates[i].isoformat()] + [_f(v) for v in s.era5[i]])

    emb_map = _embedding_matrix(rng) if cfg.embeddings else None
    emb_inputs: list[tuple[str, str, np.ndarray]] = []
    n_patches = {"S2": 0, "S1": 0}
    for s in stations:
        for i in range(warmup, n_days):
            date = dates[i]
            if (i - s.s2_phase) % cfg.s2_revisit == 0:
                u = rng.random()
                if u < cfg.cloudy_share:
                    cover = rng.uniform(0.35, 0.9)
                elif u < cfg.cloudy_share + cfg.partly_cloudy_share:
                    cover = rng.uniform(0.01, 0.15)
                else:
                    cover = 0.0
                patch = _s2_patch(cfg, rng, date, float(s.ndvi[i]), cover)
                _write_patch(out, s.sid, patch)
                n_patches["S2"] += 1
                if emb_map is not None:
                    emb_inputs.append((s.sid, date.isoformat(), _embedding_inputs(patch)))
            for orbit, offset in ((Orbit.DESC, 0), (Orbit.ASC, cfg.asc_offset_days)):
                if (i - s.s1_phase - offset) % cfg.s1_revisit == 0:
                    patch = _s1_patch(cfg, rng, date, orbit, float(s.vv_db[i]), float(s.ratio[i]))
                    _write_patch(out, s.sid, patch)
                    n_patches["S1"] += 1

    _write_csv(out / "stations.csv", STATION_COLUMNS, station_rows)
    _write_csv(out / "measurements.csv", MEASUREMENT_COLUMNS, measurement_rows)
    _write_csv(out / "era5.csv", ERA5_COLUMNS, era5_rows)
    if emb_map is not None:
        raw = np.array([v for _, _, v in emb_inputs]) if emb_inputs else np.zeros((0, 16))
        mu = raw.mean(axis=0) if len(raw) else np.zeros(16)
        sd = raw.std(axis=0) if len(raw) else np.ones(16)
        sd[sd == 0] = 1.0
        emb_rows = []
        for (sid, date, _), z in zip(emb_inputs, (raw - mu) / sd):
            emb_rows.append([sid, date] + [_f(v) for v in emb_map @ z])
        _write_csv(out / "embeddings.csv", EMBEDDING_COLUMNS, emb_rows)

    manifest = {
        "generator_version": GENERATOR_VERSION,
        "seed": seed,
        "config": asdict(cfg),
        "model": {
            "formula": "sm = clip(a0 + a1*ndvi + a2*ratio_desc + a3*mean(precip lags 0..true_lag) + eps, 0, 1)",
            "a0": cfg.a0, "a1": cfg.a1, "a2": cfg.a2, "a3": cfg.a3,
            "true_lag": cfg.true_lag, "eps_sigma": cfg.noise,
            "precip_units": "mm/day",
            "sar_noise_db": {"DESC": cfg.noise * cfg.sar_db_per_noise,
                             "ASC": cfg.noise * cfg.sar_db_per_noise * cfg.asc_noise_factor},
        },
        "counts": {"stations": len(stations), "measurements": len(measurement_rows),
                   "era5_records": len(era5_rows), "patches": n_patches,
                   "embeddings": len(emb_inputs)},
        "decoys": ["SYNX_OTHER", "SYNX_TWIN"] if cfg.decoys and stations else [],
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def _write_patch(root: Path, sid: str, patch: Patch) -> None:
    path = root / patch_relpath(sid, patch.sensor, patch.orbit, patch.date)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_patch(patch))
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc

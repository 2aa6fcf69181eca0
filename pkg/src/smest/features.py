"""Design-matrix construction from matched samples.

Missing values are NaN throughout; they must be imputed (see :func:`impute`)
before a matrix reaches the forest, which rejects non-finite input.
"""

from __future__ import annotations

import csv
import functools
import os
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from smest.core import ConfigError, DataIOError, ValidationError, epoch_day, from_epoch_day, parse_date
from smest.ingestion import (
    EMBEDDING_DIM,
    ERA5_VARIABLES,
    OPTICAL_BANDS,
    BandId,
    EmbeddingTable,
    Era5Table,
    Patch,
    read_patch,
)
from smest.matching import MatchedSample

if TYPE_CHECKING:
    from smest.experiments.specs import DatasetSpec

DEFAULT_WINDOW = 32
MAX_LOOKBACK = 20
NAN = float("nan")

S2_BAND_COLUMNS = [f"s2_{b.name}" for b in OPTICAL_BANDS]
INDEX_COLUMNS = ["ndvi", "ndwi", "ndmi", "msi"]
SAR_COLUMNS = ["s1_vv_db", "s1_vh_db", "s1_ratio"]
EMBEDDING_COLUMNS = [f"e{i:03d}" for i in range(EMBEDDING_DIM)]


def band_means(patch: Patch, window: int = DEFAULT_WINDOW) -> dict[BandId, float]:
    """Mean of every non-SCL band over the central ``window`` x ``window`` block.

    Non-finite pixels are ignored; a band whose block has no finite pixel maps to NaN.
    """
    if window <= 0 or window % 2:
        raise ValidationError(f"window must be a positive even integer, got {window}")
    if window > patch.rows or window > patch.cols:
        raise ValidationError(f"window {window} exceeds patch size {patch.rows}x{patch.cols}")
    r0 = patch.rows // 2 - window // 2
    c0 = patch.cols // 2 - window // 2
    out: dict[BandId, float] = {}
    for i, band in enumerate(patch.bands):
        if band is BandId.SCL:
            continue
        block = patch.pixels[i, r0:r0 + window, c0:c0 + window].astype(np.float64)
        finite = np.isfinite(block)
        out[band] = float(block[finite].mean()) if finite.any() else NAN
    return out


def _normalized_difference(a: float | None, b: float | None) -> float:
    if a is None or b is None or not (np.isfinite(a) and np.isfinite(b)) or a + b == 0:
        return NAN
    return (a - b) / (a + b)


@dataclass(frozen=True)
class SpectralIndices:
    ndvi: float
    ndwi: float
    ndmi: float
    msi: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.ndvi, self.ndwi, self.ndmi, self.msi)


def spectral_indices(means: dict[BandId, float]) -> SpectralIndices:
    """NDVI, NDWI, NDMI and MSI; an index whose inputs are absent or whose denominator is zero is NaN."""
    b3, b8, b4 = means.get(BandId.B03), means.get(BandId.B08), means.get(BandId.B04)
    b11, b8a = means.get(BandId.B11), means.get(BandId.B8A)
    if b11 is None or b8a is None or not (np.isfinite(b11) and np.isfinite(b8a)) or b8a == 0:
        msi = NAN
    else:
        msi = b11 / b8a
    return SpectralIndices(
        ndvi=_normalized_difference(b8, b4),
        ndwi=_normalized_difference(b3, b8),
        ndmi=_normalized_difference(b8, b11),
        msi=msi,
    )


def sar_features(means: dict[BandId, float]) -> dict[str, float]:
    """VV and VH in dB plus the linear VH/VV ratio, from mean linear power."""
    vv, vh = means.get(BandId.VV, NAN), means.get(BandId.VH, NAN)
    if not (np.isfinite(vv) and np.isfinite(vh) and vv > 0 and vh > 0):
        return {"vv": NAN, "vh": NAN, "ratio": NAN}
    return {"vv": 10.0 * np.log10(vv), "vh": 10.0 * np.log10(vh), "ratio": vh / vv}


def temporal_dynamics(curr: float, prev: float | None, gap_days: int | None) -> tuple[float, float]:
    """(difference, difference per day); NaN for both without a previous value."""
    if prev is None or gap_days is None:
        return NAN, NAN
    if gap_days < 1:
        raise ValidationError(f"gap_days must be >= 1, got {gap_days}")
    diff = curr - prev
    return diff, diff / gap_days


def era5_columns(lookback: int) -> list[str]:
    # lag-major, so the stack for L is a prefix of the stack for L + 1
    return [f"{var}_lag{lag}" for lag in range(lookback + 1) for var in ERA5_VARIABLES]


def era5_lag_stack(era5: Era5Table, station_id: str, target_day: int, lookback: int) -> np.ndarray:
    if not 0 <= lookback <= MAX_LOOKBACK:
        raise ValidationError(f"lookback must be in [0, {MAX_LOOKBACK}], got {lookback}")
    nvar = len(ERA5_VARIABLES)
    out = np.full(nvar * (lookback + 1), NAN)
    for lag in range(lookback + 1):
        rec = era5.get(station_id, target_day - lag)
        if rec is not None:
            out[lag * nvar:(lag + 1) * nvar] = rec
    return out


@functools.lru_cache(maxsize=65536)
def _means_by_identity(path: str, identity: tuple, window: int) -> dict[BandId, float]:
    return band_means(read_patch(path), window)


def _cached_means(path: str, window: int) -> dict[BandId, float]:
    # keyed on file identity as well as path, so a rewritten patch is read again
    try:
        st = os.stat(path)
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    return _means_by_identity(path, (st.st_mtime_ns, st.st_size, st.st_ino), window)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    column_names: list[str]
    values: np.ndarray  # (n_rows, n_columns), NaN marks missing
    provenance: list[tuple[str, int]]  # (station_id, epoch day) per row

    def __post_init__(self):
        if self.values.shape != (len(self.provenance), len(self.column_names)):
            raise ValidationError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.provenance)} rows x {len(self.column_names)} columns")

    @property
    def mask(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def stations(self) -> np.ndarray:
        return np.array([p[0] for p in self.provenance], dtype=object)

    def __len__(self) -> int:
        return len(self.provenance)


def feature_columns(spec: "DatasetSpec", lookback: int) -> list[str]:
    cols: list[str] = []
    s2_cols = (S2_BAND_COLUMNS if spec.use_s2 else []) + (INDEX_COLUMNS if spec.use_s2_indices else [])
    cols += s2_cols
    cols += [f"{c}_{kind}" for c in s2_cols for kind in ("diff", "rate")]
    if spec.use_s1:
        cols += SAR_COLUMNS
        cols += [f"{c}_{kind}" for c in SAR_COLUMNS for kind in ("diff", "rate")]
    cols += era5_columns(lookback)
    if spec.use_embeddings:
        cols += EMBEDDING_COLUMNS
    return cols


def _s2_vector(path, spec: "DatasetSpec", window: int) -> list[float]:
    means = _cached_means(str(path), window)
    vals: list[float] = []
    if spec.use_s2:
        vals += [means.get(b, NAN) for b in OPTICAL_BANDS]
    if spec.use_s2_indices:
        vals += list(spectral_indices(means).as_tuple())
    return vals


def _s1_vector(path, window: int) -> list[float]:
    sar = sar_features(_cached_means(str(path), window))
    return [sar["vv"], sar["vh"], sar["ratio"]]


def _with_dynamics(curr: list[float], prev: list[float] | None, gap: int | None) -> list[float]:
    dyn: list[float] = []
    for i, value in enumerate(curr):
        dyn += temporal_dynamics(value, None if prev is None else prev[i], gap)
    return curr + dyn


def assemble(samples: Sequence[MatchedSample], spec: "DatasetSpec", lookback: int,
             era5: Era5Table, embeddings: EmbeddingTable | None = None,
             window: int = DEFAULT_WINDOW) -> tuple[FeatureMatrix, np.ndarray]:
    """Build the design matrix and target vector for ``samples`` under ``spec``."""
    if spec.use_embeddings and embeddings is None:
        raise ConfigError(f"dataset {spec.label!r} needs embeddings but no embedding table is loaded")
    columns = feature_columns(spec, lookback)
    n_emb = EMBEDDING_DIM if spec.use_embeddings else 0
    rows: list[np.ndarray] = []
    targets: list[float] = []
    provenance: list[tuple[str, int]] = []
    s2_wanted = spec.use_s2 or spec.use_s2_indices
    for s in samples:
        if s.sm is None or not np.isfinite(s.sm):
            continue
        parts: list[float] = []
        if s2_wanted:
            if s.s2_match is None:
                raise ValidationError(f"sample {s.station_id}@{s.target_day} lacks the required S2 match")
            curr = _s2_vector(s.s2_match.path, spec, window)
            prev = gap = None
            if s.s2_prev is not None:
                prev = _s2_vector(s.s2_prev.path, spec, window)
                gap = s.s2_match.day - s.s2_prev.day
            parts += _with_dynamics(curr, prev, gap)
        if spec.use_s1:
            if s.s1_match is None:
                raise ValidationError(f"sample {s.station_id}@{s.target_day} lacks the required S1 match")
            curr = _s1_vector(s.s1_match.path, window)
            prev = gap = None
            if s.s1_prev is not None:
                prev = _s1_vector(s.s1_prev.path, window)
                gap = s.s1_match.day - s.s1_prev.day
            parts += _with_dynamics(curr, prev, gap)
        row = [np.asarray(parts, dtype=np.float64),
               era5_lag_stack(era5, s.station_id, s.target_day, lookback)]
        if n_emb:
            vec = None
            if s.s2_match is not None:
                vec = embeddings.get(s.station_id, s.s2_match.day)
            row.append(np.full(n_emb, NAN) if vec is None else np.asarray(vec, dtype=np.float64))
        rows.append(np.concatenate(row))
        targets.append(float(s.sm))
        provenance.append((s.station_id, s.target_day))
    values = np.vstack(rows) if rows else np.empty((0, len(columns)))
    return FeatureMatrix(columns, values, provenance), np.asarray(targets, dtype=np.float64)


def column_medians(values: np.ndarray) -> np.ndarray:
    """Per-column median of the finite entries; columns with none fall back to 0.0."""
    out = np.zeros(values.shape[1])
    for j in range(values.shape[1]):
        col = values[:, j]
        col = col[np.isfinite(col)]
        if col.size:
            out[j] = np.median(col)
    return out


def impute(values: np.ndarray, medians: np.ndarray) -> np.ndarray:
    out = values.copy()
    missing = ~np.isfinite(out)
    if missing.any():
        out[missing] = np.broadcast_to(medians, out.shape)[missing]
    return out


def write_feature_csv(path, matrix: FeatureMatrix, targets: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "date", *matrix.column_names, "sm"])
        for (sid, day), row, y in zip(matrix.provenance, matrix.values, targets):
            cells = ["" if np.isnan(v) else repr(float(v)) for v in row]
            w.writerow([sid, from_epoch_day(day).isoformat(), *cells, repr(float(y))])


def read_feature_csv(path) -> tuple[FeatureMatrix, np.ndarray | None]:
    """Inverse of :func:`write_feature_csv`; the trailing ``sm`` column is optional."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["station_id", "date"]:
            raise ValidationError(f"{path}: header must start with station_id,date")
        has_target = header[-1] == "sm"
        columns = header[2:-1] if has_target else header[2:]
        rows, targets, provenance = [], [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{reader.line_num}: expected {len(header)} cells, got {len(row)}")
            try:
                cells = [float(c) if c != "" else NAN for c in row[2:]]
            except ValueError:
                raise ValidationError(f"{path}:{reader.line_num}: non-numeric feature value") from None
            provenance.append((row[0], epoch_day(parse_date(row[1]))))
            if has_target:
                targets.append(cells.pop())
            rows.append(cells)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return (FeatureMatrix(columns, values, provenance),
            np.array(targets) if has_target else None)

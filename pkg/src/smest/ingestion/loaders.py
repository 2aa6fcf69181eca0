from __future__ import annotations

import csv
import datetime as _dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from smest.core import (
    DataIOError,
    LandCover,
    Measurement,
    MeasurementTable,
    Station,
    StationTable,
    ValidationError,
    epoch_day,
    from_epoch_day,
    haversine_km,
    parse_date,
)
from smest.ingestion.codec import BandId, Orbit, Patch, Sensor, read_patch

log = logging.getLogger(__name__)

STATION_COLUMNS = ["station_id", "network", "lat", "lon", "land_cover"]
MEASUREMENT_COLUMNS = ["station_id", "date", "sm"]
ERA5_VARIABLES = [
    "precip_total", "temp_air", "temp_skin", "temp_soil_l1", "evap_potential", "swv_l1",
    "pressure_surface", "temp_dewpoint", "leaf_area_index", "rad_solar_down",
    "rad_thermal_down", "wind_u10", "wind_v10",
]
ERA5_COLUMNS = ["station_id", "date"] + ERA5_VARIABLES
EMBEDDING_DIM = 768
EMBEDDING_COLUMNS = ["station_id", "date"] + [f"e{i:03d}" for i in range(EMBEDDING_DIM)]

CLOUD_CLASSES = (3, 8, 9, 10)
MAX_CLOUD_FRACTION = 0.20

_TEMPERATURES = ("temp_air", "temp_skin", "temp_soil_l1", "temp_dewpoint")


class LoadError(ValidationError):
    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.line = line


def _rows(path, columns: list[str]):
    """Yield (line_number, row) after checking the header; line numbers are 1-based."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise LoadError(path, 1, "empty file (missing header)")
        header = [h.strip() for h in header]
        if header != columns:
            missing = [c for c in columns if c not in header]
            extra = [c for c in header if c not in columns]
            raise LoadError(path, 1, f"bad header: missing columns {missing[:5]}, "
                                     f"unexpected {extra[:5]}, got {len(header)} of {len(columns)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(columns):
                raise LoadError(path, reader.line_num,
                                f"expected {len(columns)} columns, got {len(row)}")
            yield reader.line_num, row


def _float(path, line, name, text) -> float:
    try:
        value = float(text)
    except ValueError:
        raise LoadError(path, line, f"{name}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise LoadError(path, line, f"{name}: non-finite value {text!r}")
    return value


def _date(path, line, text) -> _dt.date:
    try:
        return parse_date(text)
    except ValidationError as exc:
        raise LoadError(path, line, str(exc)) from None


def load_stations(path) -> StationTable:
    """Read the stations CSV, keeping vegetated land covers only (row order preserved)."""
    kept: list[Station] = []
    seen: dict[str, int] = {}
    for line, row in _rows(path, STATION_COLUMNS):
        sid, network, lat, lon, cover = (c.strip() for c in row)
        if not sid:
            raise LoadError(path, line, "empty station_id")
        if sid in seen:
            raise LoadError(path, line, f"duplicate station_id {sid!r} (first at line {seen[sid]})")
        seen[sid] = line
        try:
            land_cover = LandCover(cover.lower())
        except ValueError:
            raise LoadError(path, line, f"unknown land_cover {cover!r}") from None
        try:
            st = Station(sid, network, _float(path, line, "lat", lat),
                         _float(path, line, "lon", lon), land_cover)
        except LoadError:
            raise
        except ValidationError as exc:
            raise LoadError(path, line, str(exc)) from None
        if land_cover.vegetated:
            kept.append(st)
    return StationTable(kept)


def load_measurements(path, stations: StationTable) -> MeasurementTable:
    rows: list[Measurement] = []
    first_line: dict[tuple[str, _dt.date], int] = {}
    unknown = 0
    for line, row in _rows(path, MEASUREMENT_COLUMNS):
        sid = row[0].strip()
        date = _date(path, line, row[1])
        sm = _float(path, line, "sm", row[2])
        if not 0.0 <= sm <= 1.0:
            raise LoadError(path, line, f"sm out of range [0, 1]: {sm}")
        if sid not in stations:
            unknown += 1
            continue
        key = (sid, date)
        if key in first_line:
            raise LoadError(path, line, f"duplicate measurement for {sid} on {date} "
                                        f"(lines {first_line[key]} and {line})")
        first_line[key] = line
        rows.append(Measurement(sid, date, sm))
    if unknown:
        log.warning("dropped %d measurement rows for unknown stations", unknown)
    return MeasurementTable(rows, dropped_unknown=unknown)


def dedup_stations(stations: StationTable, measurements: MeasurementTable,
                   min_km: float = 1.0) -> StationTable:
    """Drop stations closer than ``min_km`` to an already-kept one.

    Greedy over stations ordered by descending measurement count, then station_id,
    so the outcome does not depend on input row order. The kept stations are
    returned in their original order.
    """
    if not min_km > 0:
        raise ValidationError(f"min_km must be positive, got {min_km}")
    counts = measurements.counts()
    order = sorted(stations, key=lambda s: (-counts.get(s.station_id, 0), s.station_id))
    kept: list[Station] = []
    for st in order:
        if all(haversine_km(st.coords, k.coords) >= min_km for k in kept):
            kept.append(st)
    keep_ids = {s.station_id for s in kept}
    return StationTable(s for s in stations if s.station_id in keep_ids)


def cloud_fraction(patch: Patch) -> float:
    if patch.sensor is not Sensor.S2 or BandId.SCL not in patch.bands:
        raise ValidationError("cloud_fraction needs an S2 patch with an SCL band")
    scl = np.rint(patch.band(BandId.SCL)).astype(np.int64)
    return float(np.isin(scl, CLOUD_CLASSES).sum()) / scl.size


@dataclass(frozen=True)
class Era5Table:
    records: dict[tuple[str, int], np.ndarray]

    def get(self, station_id: str, day: int) -> np.ndarray | None:
        return self.records.get((station_id, day))

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class EmbeddingTable:
    records: dict[tuple[str, int], np.ndarray]

    def get(self, station_id: str, day: int) -> np.ndarray | None:
        return self.records.get((station_id, day))

    def __len__(self) -> int:
        return len(self.records)


def load_era5(path) -> Era5Table:
    records: dict[tuple[str, int], np.ndarray] = {}
    for line, row in _rows(path, ERA5_COLUMNS):
        key = (row[0].strip(), epoch_day(_date(path, line, row[1])))
        if key in records:
            raise LoadError(path, line, f"duplicate ERA5 record for {key[0]} on {row[1]}")
        vals = np.array([_float(path, line, n, t) for n, t in zip(ERA5_VARIABLES, row[2:])])
        named = dict(zip(ERA5_VARIABLES, vals))
        if any(named[t] <= 0 for t in _TEMPERATURES):
            raise LoadError(path, line, "temperatures must be > 0 K")
        if not 0.0 <= named["swv_l1"] <= 1.0:
            raise LoadError(path, line, f"swv_l1 out of range [0, 1]: {named['swv_l1']}")
        if named["leaf_area_index"] < 0:
            raise LoadError(path, line, "leaf_area_index must be >= 0")
        records[key] = vals
    return Era5Table(records)


def load_embeddings(path) -> EmbeddingTable:
    records: dict[tuple[str, int], np.ndarray] = {}
    for line, row in _rows(path, EMBEDDING_COLUMNS):
        key = (row[0].strip(), epoch_day(_date(path, line, row[1])))
        if key in records:
            raise LoadError(path, line, f"duplicate embedding for {key[0]} on {row[1]}")
        try:
            vec = np.array(row[2:], dtype=np.float64)
        except ValueError:
            raise LoadError(path, line, "embedding values must be numeric") from None
        if not np.all(np.isfinite(vec)):
            raise LoadError(path, line, "embedding contains non-finite values")
        records[key] = vec
    return EmbeddingTable(records)


# --- patch archive ------------------------------------------------------------------

def patch_relpath(station_id: str, sensor: Sensor, orbit: Orbit, date: _dt.date) -> Path:
    return Path("patches") / station_id / sensor.name / f"{date.isoformat()}_{orbit.name}.eopc"


@dataclass(frozen=True)
class Acquisition:
    station_id: str
    sensor: Sensor
    orbit: Orbit
    day: int
    path: Path
    cloud_fraction: float | None = None

    @property
    def date(self) -> _dt.date:
        return from_epoch_day(self.day)


@dataclass
class AcquisitionIndex:
    entries: dict[tuple[str, Sensor, Orbit, int], Acquisition] = field(default_factory=dict)

    def add(self, acq: Acquisition) -> None:
        key = (acq.station_id, acq.sensor, acq.orbit, acq.day)
        if key in self.entries:
            raise ValidationError(f"duplicate acquisition {key}")
        if (acq.cloud_fraction is not None) != (acq.sensor is Sensor.S2):
            raise ValidationError("cloud_fraction must be present exactly for S2 acquisitions")
        self.entries[key] = acq

    def for_station(self, station_id: str, sensor: Sensor) -> list[Acquisition]:
        return [a for (sid, sen, _, _), a in self.entries.items()
                if sid == station_id and sen is sensor]

    def __len__(self) -> int:
        return len(self.entries)


def build_acquisition_index(data_dir, stations: StationTable | None = None) -> AcquisitionIndex:
    """Scan ``patches/{station}/{sensor}/{date}_{orbit}.eopc`` under ``data_dir``.

    S2 patches are decoded to compute their cloud fraction; headers are checked
    against the file name.
    """
    root = Path(data_dir) / "patches"
    index = AcquisitionIndex()
    if not root.is_dir():
        return index
    for path in sorted(root.glob("*/*/*.eopc")):
        sid, sensor_name = path.parts[-3], path.parts[-2]
        if stations is not None and sid not in stations:
            continue
        try:
            date_text, orbit_name = path.stem.rsplit("_", 1)
            sensor, orbit = Sensor[sensor_name], Orbit[orbit_name]
            date = parse_date(date_text)
        except (KeyError, ValueError):
            raise ValidationError(f"{path}: file name does not follow the patch layout") from None
        cf = None
        if sensor is Sensor.S2:
            patch = read_patch(path)
            if (patch.sensor, patch.orbit, patch.date) != (sensor, orbit, date):
                raise ValidationError(f"{path}: header disagrees with file name")
            cf = cloud_fraction(patch)
        index.add(Acquisition(sid, sensor, orbit, epoch_day(date), path, cf))
    return index

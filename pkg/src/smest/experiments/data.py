from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from smest.core import DataIOError, MeasurementTable, StationTable
from smest.ingestion import (
    AcquisitionIndex,
    EmbeddingTable,
    Era5Table,
    build_acquisition_index,
    dedup_stations,
    load_embeddings,
    load_era5,
    load_measurements,
    load_stations,
)

log = logging.getLogger(__name__)

STATIONS_FILE = "stations.csv"
MEASUREMENTS_FILE = "measurements.csv"
ERA5_FILE = "era5.csv"
EMBEDDINGS_FILE = "embeddings.csv"


@dataclass
class Dataset:
    root: Path
    stations: StationTable
    measurements: MeasurementTable
    index: AcquisitionIndex
    era5: Era5Table
    embeddings: EmbeddingTable | None
    summary: dict = field(default_factory=dict)


def load_dataset(data_dir, dedup_km: float = 1.0, require_embeddings: bool = False) -> Dataset:
    """Load and validate every source under ``data_dir``.

    Stations are filtered to vegetated cover, then thinned so none lie within
    ``dedup_km`` of each other; measurements are restricted to the survivors.
    """
    root = Path(data_dir)
    if not root.is_dir():
        raise DataIOError(f"data directory {root} does not exist")
    all_stations = load_stations(root / STATIONS_FILE)
    measurements = load_measurements(root / MEASUREMENTS_FILE, all_stations)
    stations = dedup_stations(all_stations, measurements, dedup_km)
    kept = measurements.restrict(stations)
    index = build_acquisition_index(root, stations)
    era5 = load_era5(root / ERA5_FILE)
    emb_path = root / EMBEDDINGS_FILE
    embeddings = None
    if emb_path.exists():
        embeddings = load_embeddings(emb_path)
    elif require_embeddings:
        raise DataIOError(f"embeddings file {emb_path} is missing")
    summary = {
        "stations_vegetated": len(all_stations),
        "stations_after_dedup": len(stations),
        "measurements": len(kept),
        "measurements_unknown_station": measurements.dropped_unknown,
        "acquisitions": len(index),
        "era5_records": len(era5),
        "embedding_records": 0 if embeddings is None else len(embeddings),
    }
    log.info("loaded %s", summary)
    return Dataset(root, stations, kept, index, era5, embeddings, summary)

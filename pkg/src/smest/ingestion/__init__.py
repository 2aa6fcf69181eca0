"""Loading and validation of stations, measurements, patches, ERA5 and embeddings."""

from smest.ingestion.codec import (
    BandId,
    OPTICAL_BANDS,
    Orbit,
    Patch,
    PatchFormatError,
    SAR_BANDS,
    Sensor,
    decode_patch,
    encode_patch,
    read_patch,
    write_patch,
)
from smest.ingestion.loaders import (
    Acquisition,
    AcquisitionIndex,
    EMBEDDING_DIM,
    ERA5_VARIABLES,
    EmbeddingTable,
    Era5Table,
    LoadError,
    MAX_CLOUD_FRACTION,
    build_acquisition_index,
    cloud_fraction,
    dedup_stations,
    load_embeddings,
    load_era5,
    load_measurements,
    load_stations,
    patch_relpath,
)

__all__ = [
    "Acquisition", "AcquisitionIndex", "BandId", "EMBEDDING_DIM", "ERA5_VARIABLES",
    "EmbeddingTable", "Era5Table", "LoadError", "MAX_CLOUD_FRACTION", "OPTICAL_BANDS",
    "Orbit", "Patch", "PatchFormatError", "SAR_BANDS", "Sensor", "build_acquisition_index",
    "cloud_fraction", "decode_patch", "dedup_stations", "encode_patch", "load_embeddings",
    "load_era5", "load_measurements", "load_stations", "patch_relpath", "read_patch",
    "write_patch",
]

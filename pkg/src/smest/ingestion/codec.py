"""Binary patch format (``.eopc``).

Layout, little-endian::

    magic      4s   b"EOPC"
    version    u16  1
    sensor     u8   1 = S2, 2 = S1
    orbit      u8   0 = none, 1 = ASC, 2 = DESC
    date       i32  days since 1970-01-01
    rows       u16
    cols       u16
    band_count u8
    bands      band_count x u8 (BandId codes)
    pixels     band_count x rows x cols f32, band-major, row-major
"""

from __future__ import annotations

import datetime as _dt
import enum
import struct
from dataclasses import dataclass

import numpy as np

from smest.core import DataIOError, ValidationError, epoch_day, from_epoch_day

MAGIC = b"EOPC"
VERSION = 1
MIN_SIZE = 16
MODEL_PATCH_SIZE = 256

_HEADER = struct.Struct("<4sHBBiHHB")


class PatchFormatError(ValidationError):
    pass


class Sensor(enum.IntEnum):
    S2 = 1
    S1 = 2


class Orbit(enum.IntEnum):
    NONE = 0
    ASC = 1
    DESC = 2


class BandId(enum.IntEnum):
    B01 = 1
    B02 = 2
    B03 = 3
    B04 = 4
    B05 = 5
    B06 = 6
    B07 = 7
    B08 = 8
    B8A = 9
    B09 = 10
    B11 = 11
    B12 = 12
    SCL = 13
    VV = 14
    VH = 15


OPTICAL_BANDS: tuple[BandId, ...] = tuple(BandId)[:12]
SAR_BANDS: tuple[BandId, ...] = (BandId.VV, BandId.VH)
ALLOWED_BANDS = {
    Sensor.S2: frozenset(OPTICAL_BANDS + (BandId.SCL,)),
    Sensor.S1: frozenset(SAR_BANDS),
}


@dataclass(frozen=True, eq=False)
class Patch:
    sensor: Sensor
    orbit: Orbit
    date: _dt.date
    bands: tuple[BandId, ...]
    pixels: np.ndarray  # float32, shape (len(bands), rows, cols)

    def __post_init__(self):
        sensor = Sensor(self.sensor)
        orbit = Orbit(self.orbit)
        if sensor is Sensor.S2 and orbit is not Orbit.NONE:
            raise PatchFormatError("S2 patches must carry orbit NONE")
        if sensor is Sensor.S1 and orbit is Orbit.NONE:
            raise PatchFormatError("S1 patches must carry orbit ASC or DESC")
        bands = tuple(BandId(b) for b in self.bands)
        bad = [b.name for b in bands if b not in ALLOWED_BANDS[sensor]]
        if bad:
            raise PatchFormatError(f"band/sensor mismatch: {sensor.name} patch declares {bad}")
        if len(set(bands)) != len(bands):
            raise PatchFormatError("duplicate band codes")
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if pixels.ndim != 3 or pixels.shape[0] != len(bands):
            raise PatchFormatError(
                f"pixel array shape {pixels.shape} does not match {len(bands)} bands")
        rows, cols = pixels.shape[1:]
        if rows != cols or rows < MIN_SIZE:
            raise PatchFormatError(f"patch must be square with size >= {MIN_SIZE}, got {rows}x{cols}")
        object.__setattr__(self, "sensor", sensor)
        object.__setattr__(self, "orbit", orbit)
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "pixels", pixels)

    @property
    def rows(self) -> int:
        return self.pixels.shape[1]

    @property
    def cols(self) -> int:
        return self.pixels.shape[2]

    def band(self, band: BandId) -> np.ndarray:
        try:
            return self.pixels[self.bands.index(band)]
        except ValueError:
            raise KeyError(band.name) from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Patch):
            return NotImplemented
        return (self.sensor == other.sensor and self.orbit == other.orbit
                and self.date == other.date and self.bands == other.bands
                and self.pixels.tobytes() == other.pixels.tobytes())


def encode_patch(patch: Patch) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, int(patch.sensor), int(patch.orbit),
                          epoch_day(patch.date), patch.rows, patch.cols, len(patch.bands))
    codes = bytes(int(b) for b in patch.bands)
    return header + codes + patch.pixels.astype("<f4", copy=False).tobytes()


def decode_patch(data: bytes) -> Patch:
    if len(data) < 4 or data[:4] != MAGIC:
        raise PatchFormatError("not a patch file (bad magic)")
    if len(data) < _HEADER.size:
        raise PatchFormatError(
            f"truncated patch header: expected {_HEADER.size} bytes, got {len(data)}")
    _, version, sensor, orbit, day, rows, cols, nbands = _HEADER.unpack_from(data)
    if version != VERSION:
        raise PatchFormatError(f"unsupported patch version {version}")
    try:
        sensor_e, orbit_e = Sensor(sensor), Orbit(orbit)
    except ValueError as exc:
        raise PatchFormatError(str(exc)) from None
    expected = _HEADER.size + nbands + 4 * nbands * rows * cols
    if len(data) != expected:
        raise PatchFormatError(
            f"truncated or oversized patch: expected {expected} bytes, got {len(data)}")
    codes = data[_HEADER.size:_HEADER.size + nbands]
    try:
        bands = tuple(BandId(c) for c in codes)
    except ValueError:
        raise PatchFormatError(f"unknown band code in {list(codes)}") from None
    pixels = np.frombuffer(data, dtype="<f4", offset=_HEADER.size + nbands)
    pixels = pixels.reshape(nbands, rows, cols).astype(np.float32)
    return Patch(sensor_e, orbit_e, from_epoch_day(day), bands, pixels)


def read_patch(path) -> Patch:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read patch {path}: {exc}") from exc
    try:
        return decode_patch(data)
    except PatchFormatError as exc:
        raise PatchFormatError(f"{path}: {exc}") from None


def write_patch(path, patch: Patch) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(encode_patch(patch))
    except OSError as exc:
        raise DataIOError(f"cannot write patch {path}: {exc}") from exc

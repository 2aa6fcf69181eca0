"""Shared primitives: geodesy, day arithmetic, RNG streams and the station types."""

from __future__ import annotations

import datetime as _dt
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numba
import numpy as np

EARTH_RADIUS_KM = 6371.0
_EPOCH = _dt.date(1970, 1, 1)


class SmestError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ValidationError(SmestError, ValueError):
    exit_code = 1


class ConfigError(SmestError):
    exit_code = 2


class DataIOError(SmestError, OSError):
    exit_code = 3


class LandCover(enum.Enum):
    CROPLAND = "cropland"
    TREE_COVER = "tree_cover"
    GRASSLAND = "grassland"
    SPARSE_VEGETATION = "sparse_vegetation"
    OTHER = "other"

    @property
    def vegetated(self) -> bool:
        return self is not LandCover.OTHER


def _check_coord(lat: float, lon: float, field: str = "") -> None:
    prefix = f"{field}." if field else ""
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise ValidationError(f"{prefix}lat out of range [-90, 90]: {lat!r}")
    if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
        raise ValidationError(f"{prefix}lon out of range [-180, 180]: {lon!r}")


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in km between two (lat, lon) pairs in degrees."""
    _check_coord(*a, field="a")
    _check_coord(*b, field="b")
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def parse_date(value: str | _dt.date) -> _dt.date:
    if isinstance(value, _dt.datetime):
        return value.date()
    if isinstance(value, _dt.date):
        return value
    text = str(value).strip()
    try:
        # sub-daily timestamps are truncated to the UTC day
        return _dt.date.fromisoformat(text[:10])
    except ValueError:
        raise ValidationError(f"unparseable date: {value!r}") from None


def epoch_day(date: str | _dt.date) -> int:
    """Days since 1970-01-01 (negative before)."""
    return (parse_date(date) - _EPOCH).days


def from_epoch_day(day: int) -> _dt.date:
    return _EPOCH + _dt.timedelta(days=int(day))


# --- deterministic random streams -------------------------------------------------

@numba.njit(cache=True)
def mix64(z):
    """SplitMix64 finalizer (a bijection on uint64)."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def stream_key(seed, stream_id):
    return mix64(mix64(np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15))
                 ^ mix64(np.uint64(stream_id) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(1)))


@numba.njit(cache=True)
def draw_u64(key, counter):
    return mix64(key + (np.uint64(counter) + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15))


@numba.njit(cache=True)
def draw_uniform(key, counter):
    """Uniform double in [0, 1) from the top 53 bits of draw ``counter``."""
    return float(draw_u64(key, counter) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _fill_uniform(key, start, n):
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = draw_uniform(key, start + i)
    return out


@numba.njit(cache=True)
def _fill_u64(key, start, n):
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        out[i] = draw_u64(key, start + i)
    return out


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Draw ``i`` is a pure function of the key and ``i``, so sequences are
    identical on every platform and independent streams can be handed to
    parallel workers. Use :meth:`clone` rather than sharing one instance.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise ValidationError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.key = np.uint64(stream_key(np.uint64(seed), np.uint64(stream_id)))
        self.counter = 0

    def clone(self) -> "RngStream":
        other = RngStream(self.seed, self.stream_id)
        other.counter = self.counter
        return other

    def _take(self, n: int) -> int:
        start = self.counter
        self.counter += n
        return start

    def random(self, n: int | None = None):
        if n is None:
            return draw_uniform(self.key, self._take(1))
        return _fill_uniform(self.key, self._take(n), n)

    def u64(self, n: int) -> np.ndarray:
        return _fill_u64(self.key, self._take(n), n)

    def integers(self, high: int, n: int | None = None):
        """Uniform integers in [0, high) by scaling a uniform double."""
        u = self.random(1 if n is None else n)
        vals = np.minimum((u * high).astype(np.int64), high - 1)
        return int(vals[0]) if n is None else vals

    def normal(self, n: int) -> np.ndarray:
        """Standard normals by Box-Muller."""
        m = (n + 1) // 2
        u1 = 1.0 - self.random(m)
        u2 = self.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of ``range(n)``."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.random(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


# --- stations and measurements ----------------------------------------------------

@dataclass(frozen=True)
class Station:
    station_id: str
    network: str
    lat: float
    lon: float
    land_cover: LandCover

    def __post_init__(self):
        if not self.station_id:
            raise ValidationError("station_id must be non-empty")
        _check_coord(self.lat, self.lon)

    @property
    def coords(self) -> tuple[float, float]:
        return (self.lat, self.lon)


@dataclass(frozen=True)
class Measurement:
    station_id: str
    date: _dt.date
    sm: float

    def __post_init__(self):
        if not (math.isfinite(self.sm) and 0.0 <= self.sm <= 1.0):
            raise ValidationError(f"sm out of range [0, 1]: {self.sm!r}")

    @property
    def day(self) -> int:
        return epoch_day(self.date)


class StationTable:
    def __init__(self, stations: Iterable[Station] = ()):
        self._stations: tuple[Station, ...] = tuple(stations)
        self._by_id: dict[str, Station] = {}
        for st in self._stations:
            if st.station_id in self._by_id:
                raise ValidationError(f"duplicate station_id {st.station_id!r}")
            self._by_id[st.station_id] = st

    def __iter__(self) -> Iterator[Station]:
        return iter(self._stations)

    def __len__(self) -> int:
        return len(self._stations)

    def __contains__(self, station_id: object) -> bool:
        return station_id in self._by_id

    def __getitem__(self, station_id: str) -> Station:
        return self._by_id[station_id]

    @property
    def ids(self) -> list[str]:
        return [s.station_id for s in self._stations]


class MeasurementTable:
    def __init__(self, measurements: Iterable[Measurement] = (), dropped_unknown: int = 0):
        self._rows: tuple[Measurement, ...] = tuple(measurements)
        self.dropped_unknown = dropped_unknown
        seen: set[tuple[str, _dt.date]] = set()
        for m in self._rows:
            key = (m.station_id, m.date)
            if key in seen:
                raise ValidationError(f"duplicate measurement for {key[0]} on {key[1]}")
            seen.add(key)

    def __iter__(self) -> Iterator[Measurement]:
        return iter(self._rows)

    def __len__(self) -> int:
        return len(self._rows)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for m in self._rows:
            out[m.station_id] = out.get(m.station_id, 0) + 1
        return out

    def restrict(self, stations: StationTable) -> "MeasurementTable":
        return MeasurementTable([m for m in self._rows if m.station_id in stations],
                                self.dropped_unknown)

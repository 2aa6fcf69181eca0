"""Temporal matching of in-situ measurements to satellite acquisitions."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

from smest.core import MeasurementTable, ValidationError
from smest.ingestion import MAX_CLOUD_FRACTION, Acquisition, AcquisitionIndex, Orbit, Sensor

log = logging.getLogger(__name__)

DEFAULT_WINDOW_DAYS = 10
DEFAULT_MAX_GAP_DAYS = 30


class MatchKind(enum.Enum):
    CURRENT_DAY = "curr_day"
    CLOSEST = "closest"


@dataclass(frozen=True)
class MatchStrategy:
    kind: MatchKind
    window_days: int = DEFAULT_WINDOW_DAYS

    def __post_init__(self):
        if self.window_days < 0:
            raise ValidationError("window_days must be non-negative")

    @classmethod
    def current_day(cls) -> "MatchStrategy":
        return cls(MatchKind.CURRENT_DAY)

    @classmethod
    def closest(cls, window_days: int = DEFAULT_WINDOW_DAYS) -> "MatchStrategy":
        return cls(MatchKind.CLOSEST, window_days)

    @property
    def label(self) -> str:
        return self.kind.value


class OrbitConfig(enum.Enum):
    ASC = "ASC"
    DESC = "DESC"
    BOTH = "BOTH"

    def admits(self, orbit: Orbit) -> bool:
        if self is OrbitConfig.BOTH:
            return orbit in (Orbit.ASC, Orbit.DESC)
        return orbit.name == self.value


# same-day ties between orbits resolve DESC first
_ORBIT_RANK = {Orbit.DESC: 0, Orbit.ASC: 1, Orbit.NONE: 2}


def _pool_key(acq: Acquisition):
    return (acq.day, _ORBIT_RANK[acq.orbit])


def candidate_pool(index: AcquisitionIndex, station_id: str, sensor: Sensor,
                   orbit_cfg: OrbitConfig = OrbitConfig.BOTH) -> list[Acquisition]:
    """Usable acquisitions for one station and sensor, sorted by date.

    S2 entries above the cloud screen are dropped; S1 entries are filtered by orbit.
    """
    pool = []
    for acq in index.for_station(station_id, sensor):
        if sensor is Sensor.S2:
            if acq.cloud_fraction is not None and acq.cloud_fraction > MAX_CLOUD_FRACTION:
                continue
        elif not orbit_cfg.admits(acq.orbit):
            continue
        pool.append(acq)
    pool.sort(key=_pool_key)
    return pool


def match_one(pool: Sequence[Acquisition], target_day: int,
              strategy: MatchStrategy) -> Acquisition | None:
    """Acquisition for ``target_day`` under ``strategy``.

    CLOSEST minimises |date - target| within the window; equal distances prefer
    the earlier acquisition, then DESC over ASC.
    """
    window = 0 if strategy.kind is MatchKind.CURRENT_DAY else strategy.window_days
    best = None
    best_key = None
    for acq in pool:
        delta = acq.day - target_day
        if abs(delta) > window:
            continue
        key = (abs(delta), delta, _ORBIT_RANK[acq.orbit])
        if best_key is None or key < best_key:
            best, best_key = acq, key
    return best


def previous_match(pool: Sequence[Acquisition], main_day: int,
                   max_gap_days: int = DEFAULT_MAX_GAP_DAYS) -> Acquisition | None:
    """Latest acquisition strictly before ``main_day`` and at most ``max_gap_days`` earlier."""
    best = None
    for acq in pool:
        if main_day - max_gap_days <= acq.day < main_day:
            if best is None or (acq.day, -_ORBIT_RANK[acq.orbit]) > (best.day, -_ORBIT_RANK[best.orbit]):
                best = acq
    return best


@dataclass(frozen=True)
class MatchedSample:
    station_id: str
    target_day: int
    sm: float
    s2_match: Acquisition | None = None
    s2_prev: Acquisition | None = None
    s1_match: Acquisition | None = None
    s1_prev: Acquisition | None = None


@dataclass
class MatchStats:
    total: int = 0
    dropped_s2: int = 0
    dropped_s1: int = 0

    @property
    def kept(self) -> int:
        return self.total - self.dropped_s2 - self.dropped_s1


def build_samples(measurements: MeasurementTable, index: AcquisitionIndex,
                  s2_strategy: MatchStrategy | None, s1_strategy: MatchStrategy | None,
                  orbit_cfg: OrbitConfig = OrbitConfig.DESC,
                  max_gap_days: int = DEFAULT_MAX_GAP_DAYS,
                  stats: MatchStats | None = None) -> list[MatchedSample]:
    """One sample per measurement whose required modalities all matched.

    A modality is required when its strategy is given; ``None`` skips it. The
    output is ordered by (station_id, date).
    """
    stats = stats if stats is not None else MatchStats()
    pools: dict[tuple[str, Sensor], list[Acquisition]] = {}

    def pool_for(sid: str, sensor: Sensor) -> list[Acquisition]:
        key = (sid, sensor)
        if key not in pools:
            pools[key] = candidate_pool(index, sid, sensor, orbit_cfg)
        return pools[key]

    out: list[MatchedSample] = []
    for m in sorted(measurements, key=lambda m: (m.station_id, m.date)):
        stats.total += 1
        day = m.day
        s2 = s2_prev = s1 = s1_prev = None
        if s2_strategy is not None:
            pool = pool_for(m.station_id, Sensor.S2)
            s2 = match_one(pool, day, s2_strategy)
            if s2 is None:
                stats.dropped_s2 += 1
                continue
            s2_prev = previous_match(pool, s2.day, max_gap_days)
        if s1_strategy is not None:
            pool = pool_for(m.station_id, Sensor.S1)
            s1 = match_one(pool, day, s1_strategy)
            if s1 is None:
                stats.dropped_s1 += 1
                continue
            s1_prev = previous_match(pool, s1.day, max_gap_days)
        out.append(MatchedSample(m.station_id, day, m.sm, s2, s2_prev, s1, s1_prev))
    if stats.total - len(out):
        log.info("matching kept %d of %d measurements (%d without S2, %d without S1)",
                 len(out), stats.total, stats.dropped_s2, stats.dropped_s1)
    return out

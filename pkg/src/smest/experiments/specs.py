"""Dataset specifications and the three experiment grids."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from smest.core import ConfigError
from smest.matching import MatchKind, MatchStrategy, OrbitConfig

DEFAULT_LOOKBACK = 20
# the configuration E2 sweeps and E3 builds on
BEST_E1_LABEL = "S2_curr_day + S1_DESC_closest"


@dataclass(frozen=True)
class DatasetSpec:
    label: str
    use_s2: bool = False
    s2_strategy: MatchStrategy | None = None
    use_s1: bool = False
    s1_strategy: MatchStrategy | None = None
    orbit: OrbitConfig | None = None
    use_embeddings: bool = False
    use_s2_indices: bool = False
    era5_lookback: int = DEFAULT_LOOKBACK

    def __post_init__(self):
        if not (self.use_s2 or self.use_s1 or self.use_embeddings):
            raise ConfigError(f"{self.label}: at least one of S2, S1 or embeddings is required")
        if self.needs_s2 and self.s2_strategy is None:
            raise ConfigError(f"{self.label}: S2-derived columns need an S2 matching strategy")
        if self.use_s1 and (self.s1_strategy is None or self.orbit is None):
            raise ConfigError(f"{self.label}: S1 needs a matching strategy and an orbit configuration")
        if not 0 <= self.era5_lookback <= 20:
            raise ConfigError(f"{self.label}: era5_lookback must be in [0, 20]")

    @property
    def needs_s2(self) -> bool:
        return self.use_s2 or self.use_s2_indices or self.use_embeddings

    def with_lookback(self, lookback: int) -> "DatasetSpec":
        return replace(self, era5_lookback=lookback)

    def with_window(self, window_days: int) -> "DatasetSpec":
        """Same spec with every CLOSEST strategy using ``window_days``."""
        def fix(s):
            if s is not None and s.kind is MatchKind.CLOSEST:
                return MatchStrategy.closest(window_days)
            return s
        return replace(self, s2_strategy=fix(self.s2_strategy), s1_strategy=fix(self.s1_strategy))

    @property
    def s2_label(self) -> str:
        return self.s2_strategy.label if self.needs_s2 else "none"

    @property
    def s1_label(self) -> str:
        return self.s1_strategy.label if self.use_s1 else "none"

    @property
    def orbit_label(self) -> str:
        return self.orbit.value if self.use_s1 else "none"


_TOKEN = re.compile(r"^(S2|S1_(ASC|DESC|BOTH))_(curr_day|closest)$")


def parse_label(label: str, lookback: int = DEFAULT_LOOKBACK) -> DatasetSpec:
    """Build a spec from a label such as ``"S2_curr_day + S1_DESC_closest"``.

    ``Prithvi_S2`` adds embeddings (matched through S2 current-day acquisitions
    unless an S2 token says otherwise) and ``indices`` adds the S2 indices.
    """
    kw: dict = {"use_s2_indices": False}
    prithvi = False
    for token in (t.strip() for t in label.split("+")):
        if token == "Prithvi_S2":
            prithvi = True
            continue
        if token == "indices":
            kw["use_s2_indices"] = True
            continue
        m = _TOKEN.match(token)
        if not m:
            raise ConfigError(f"cannot parse dataset label token {token!r} in {label!r}")
        strategy = MatchStrategy(MatchKind(m.group(3)))
        if m.group(1) == "S2":
            kw.update(use_s2=True, use_s2_indices=True, s2_strategy=strategy)
        else:
            kw.update(use_s1=True, s1_strategy=strategy, orbit=OrbitConfig(m.group(2)))
    if prithvi:
        kw["use_embeddings"] = True
        kw.setdefault("s2_strategy", MatchStrategy.current_day())
    return DatasetSpec(label=label, era5_lookback=lookback, **kw)


E1_LABELS = [
    "S2_curr_day",
    "S1_ASC_curr_day",
    "S1_DESC_curr_day",
    "S1_BOTH_curr_day",
    "S2_closest + S1_ASC_closest",
    "S2_closest + S1_DESC_closest",
    "S2_closest + S1_BOTH_closest",
    "S1_ASC_curr_day + S2_closest",
    "S1_DESC_curr_day + S2_closest",
    "S1_BOTH_curr_day + S2_closest",
    "S2_curr_day + S1_ASC_closest",
    "S2_curr_day + S1_DESC_closest",
    "S2_curr_day + S1_BOTH_closest",
]

E3_LABELS = [
    "Prithvi_S2",
    "Prithvi_S2 + S1_DESC_closest",
    "Prithvi_S2 + indices + S1_DESC_closest",
]


def e1_specs(lookback: int = DEFAULT_LOOKBACK) -> list[DatasetSpec]:
    return [parse_label(label, lookback) for label in E1_LABELS]


def e2_specs(lag_min: int = 0, lag_max: int = 20) -> list[DatasetSpec]:
    base = parse_label(BEST_E1_LABEL)
    return [base.with_lookback(lag) for lag in range(lag_min, lag_max + 1)]


def e3_specs(lookback: int = DEFAULT_LOOKBACK) -> list[DatasetSpec]:
    return [parse_label(label, lookback) for label in E3_LABELS]

"""Run configuration: ``key = value`` files overlaid by CLI flags."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from smest.core import ConfigError, DataIOError
from smest.forest import ForestParams


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = "data"
    out: str = "results"
    seed: int = 0
    folds: int = 5
    trees: int = 100
    max_features: str = "third"
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    lookback: int = 20
    lag_min: int = 0
    lag_max: int = 20
    window: int = 32
    match_window_days: int = 10
    prev_max_gap_days: int = 30
    dedup_km: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if not 0 <= self.lag_min <= self.lag_max <= 20:
            raise ConfigError(f"lag range must satisfy 0 <= lag_min <= lag_max <= 20, "
                              f"got {self.lag_min}..{self.lag_max}")
        if not 0 <= self.lookback <= 20:
            raise ConfigError(f"lookback must be in [0, 20], got {self.lookback}")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.forest_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def forest_params(self) -> ForestParams:
        return ForestParams(n_trees=self.trees, max_features=self.max_features,
                            min_samples_split=self.min_samples_split,
                            min_samples_leaf=self.min_samples_leaf, max_depth=self.max_depth,
                            bootstrap=self.bootstrap, seed=self.seed)

    def snapshot(self) -> dict:
        return asdict(self)


def _coerce(name: str, kind, text: str):
    text = text.strip()
    try:
        if name == "max_depth":
            return None if text.lower() in ("", "none") else int(text)
        if kind is bool or kind == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


_KINDS = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KINDS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        values[key] = _coerce(key, _KINDS[key], value)
    return values


def resolve_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """File values first, then every non-None override."""
    values: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataIOError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text, str(path)))
    for key, value in overrides.items():
        if key not in _KINDS:
            raise ConfigError(f"unknown setting {key!r}")
        if value is not None:
            values[key] = value
    return RunConfig(**values)

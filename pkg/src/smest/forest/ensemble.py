from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from smest.core import RngStream, ValidationError
from smest.forest.tree import Tree, _apply, fit_tree, global_orders

MAX_FEATURE_RULES = ("third", "sqrt", "all")
# feature-subset streams live above the bootstrap streams (one per tree index)
_FEATURE_STREAM_OFFSET = 1 << 32


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_features: str = "third"
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be positive")
        if self.max_features not in MAX_FEATURE_RULES:
            raise ValidationError(f"max_features must be one of {MAX_FEATURE_RULES}")
        if self.min_samples_split < 2:
            raise ValidationError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Forest:
    trees: list[Tree]
    params: ForestParams
    column_schema: list[str]
    imputation_medians: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if len(self.trees) != self.params.n_trees:
            raise ValidationError(f"forest holds {len(self.trees)} trees, params say {self.params.n_trees}")

    def split_gains(self) -> np.ndarray:
        """Total variance reduction credited to each column across all trees."""
        out = np.zeros(len(self.column_schema))
        for t in self.trees:
            internal = t.feature >= 0
            np.add.at(out, t.feature[internal], t.gain[internal])
        return out


def bootstrap_indices(n: int, seed: int, tree_index: int) -> np.ndarray:
    return RngStream(seed, tree_index).integers(n, n)


def fit_forest(X, y, params: ForestParams = ForestParams(),
               column_names: Sequence[str] | None = None,
               imputation_medians=None) -> Forest:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("X must be a 2-D matrix")
    n, p = X.shape
    if n < 2 or p < 1:
        raise ValidationError(f"need at least 2 rows and 1 column, got {n}x{p}")
    if y.shape != (n,):
        raise ValidationError(f"y must have {n} entries, got shape {y.shape}")
    names = list(column_names) if column_names is not None else [f"x{j}" for j in range(p)]
    if len(names) != p:
        raise ValidationError(f"{len(names)} column names for {p} columns")
    bad = ~np.isfinite(X)
    if bad.any():
        j = int(np.nonzero(bad.any(axis=0))[0][0])
        raise ValidationError(f"non-finite values in column {names[j]!r}; impute before fitting")
    if not np.all(np.isfinite(y)):
        raise ValidationError("non-finite target values")
    medians = np.zeros(p) if imputation_medians is None else np.asarray(imputation_medians, dtype=np.float64)

    Xf = np.asfortranarray(X)
    orders = global_orders(Xf)
    trees = []
    for t in range(params.n_trees):
        idx = bootstrap_indices(n, params.seed, t) if params.bootstrap else np.arange(n)
        trees.append(fit_tree(Xf, y, RngStream(params.seed, _FEATURE_STREAM_OFFSET + t),
                              max_features=params.max_features,
                              min_samples_split=params.min_samples_split,
                              min_samples_leaf=params.min_samples_leaf,
                              max_depth=params.max_depth, sample_idx=idx, orders=orders))
    return Forest(trees, params, names, medians)


def check_schema(forest: Forest, columns: Sequence[str]) -> None:
    columns = list(columns)
    if columns == forest.column_schema:
        return
    have, want = set(columns), set(forest.column_schema)
    missing = [c for c in forest.column_schema if c not in have]
    extra = [c for c in columns if c not in want]
    raise ValidationError(f"column schema mismatch: missing {missing[:10]}, extra {extra[:10]}"
                          + ("" if missing or extra else " (order differs)"))


def predict(forest: Forest, X, columns: Sequence[str] | None = None) -> np.ndarray:
    """Mean of the per-tree leaf values for each row of ``X`` (already imputed)."""
    if columns is not None:
        check_schema(forest, columns)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(forest.column_schema):
        raise ValidationError(
            f"expected {len(forest.column_schema)} columns, got {X.shape[-1] if X.ndim else 0}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("prediction input contains non-finite values; impute first")
    out = np.zeros(X.shape[0])
    for t in forest.trees:
        _apply(t.feature, t.threshold, t.left, t.right, t.value, X, out, 1.0)
    return out / len(forest.trees)

"""Versioned binary forest files (magic ``SMRF``).

Layout, little-endian: magic, u16 version, params block, u32 column count,
each column name as u16 length + UTF-8 bytes, f64 medians per column, then
per tree a u32 node count followed by the node arrays (feature i32,
threshold f64, left i32, right i32, value f64, count u32, gain f64).
"""

from __future__ import annotations

import struct

import numpy as np

from smest.core import DataIOError, ValidationError
from smest.forest.ensemble import MAX_FEATURE_RULES, Forest, ForestParams
from smest.forest.tree import Tree

MAGIC = b"SMRF"
VERSION = 1
_PARAMS = struct.Struct("<IBIIiBQ")  # n_trees, max_features, min_split, min_leaf, max_depth, bootstrap, seed
_NODE_FIELDS = (("feature", "<i4", np.int64), ("threshold", "<f8", np.float64),
                ("left", "<i4", np.int64), ("right", "<i4", np.int64),
                ("value", "<f8", np.float64), ("count", "<u4", np.int64),
                ("gain", "<f8", np.float64))


def dumps(forest: Forest) -> bytes:
    p = forest.params
    parts = [MAGIC, struct.pack("<H", VERSION),
             _PARAMS.pack(p.n_trees, MAX_FEATURE_RULES.index(p.max_features), p.min_samples_split,
                          p.min_samples_leaf, -1 if p.max_depth is None else p.max_depth,
                          int(p.bootstrap), p.seed),
             struct.pack("<I", len(forest.column_schema))]
    for name in forest.column_schema:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    medians = np.asarray(forest.imputation_medians, dtype="<f8")
    if medians.shape != (len(forest.column_schema),):
        medians = np.zeros(len(forest.column_schema), dtype="<f8")
    parts.append(medians.tobytes())
    for tree in forest.trees:
        parts.append(struct.pack("<I", tree.n_nodes))
        for name, wire, _ in _NODE_FIELDS:
            parts.append(np.asarray(getattr(tree, name)).astype(wire).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValidationError(f"truncated forest file at byte {self.pos} (need {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def loads(data: bytes) -> Forest:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise ValidationError("not a forest file (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise ValidationError(f"unsupported forest file version {version}")
    n_trees, mf, min_split, min_leaf, depth, boot, seed = r.unpack(_PARAMS)
    params = ForestParams(n_trees, MAX_FEATURE_RULES[mf], min_split, min_leaf,
                          None if depth < 0 else depth, bool(boot), seed)
    (n_cols,) = r.unpack("<I")
    names = []
    for _ in range(n_cols):
        (length,) = r.unpack("<H")
        names.append(r.take(length).decode("utf-8"))
    medians = np.frombuffer(r.take(8 * n_cols), dtype="<f8").astype(np.float64)
    trees = []
    for _ in range(n_trees):
        (n_nodes,) = r.unpack("<I")
        arrays = []
        for _, wire, dtype in _NODE_FIELDS:
            size = np.dtype(wire).itemsize * n_nodes
            arrays.append(np.frombuffer(r.take(size), dtype=wire).astype(dtype))
        trees.append(Tree(*arrays))
    if r.pos != len(data):
        raise ValidationError(f"{len(data) - r.pos} trailing bytes after forest payload")
    return Forest(trees, params, names, medians)


def save_forest(path, forest: Forest) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(dumps(forest))
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def load_forest(path) -> Forest:
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc

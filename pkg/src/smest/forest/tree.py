"""CART regression trees with exhaustive variance-reduction splits.

Trees are stored as flat node arrays. A node with ``feature == -1`` is a leaf;
internal nodes send ``x`` left iff ``x[feature] <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from smest.core import RngStream, ValidationError, draw_uniform

LEAF = -1
# splits whose gains differ by less than this fraction of the node's total
# sum of squares are treated as ties
TIE_RTOL = 1e-9


@numba.njit(cache=True)
def _scan_sorted(vals, ys, n, mean, tol, min_leaf):
    """Best (gain, threshold) over ``vals[:n]`` sorted ascending with targets ``ys``.

    Gain is -1 when no admissible threshold exists.
    """
    best_score = -1.0
    best_thr = 0.0
    csum = 0.0
    for i in range(n - 1):
        csum += ys[i] - mean
        n_left = i + 1
        n_right = n - n_left
        if n_left < min_leaf:
            continue
        if n_right < min_leaf:
            break
        a = vals[i]
        b = vals[i + 1]
        if not a < b:
            continue
        # n Var(y) - nL Var(yL) - nR Var(yR), written with the node mean removed
        score = csum * csum * n / (n_left * n_right)
        if score > best_score + tol:
            best_score = score
            thr = 0.5 * (a + b)
            if thr >= b:
                thr = a
            best_thr = thr
    return best_score, best_thr


@numba.njit(cache=True)
def _best_split_node(xs, ys, orders, start, end, features, min_leaf, vbuf, ybuf):
    """Best (feature, threshold, gain) for the node whose slots sit in ``orders[:, start:end]``,
    each row of ``orders`` sorted by its column."""
    n = end - start
    total = 0.0
    for k in range(start, end):
        total += ys[orders[0, k]]
    mean = total / n
    ss = 0.0
    for k in range(start, end):
        d = ys[orders[0, k]] - mean
        ss += d * d
    tol = TIE_RTOL * ss
    best_f = -1
    best_score = 0.0
    best_thr = 0.0
    for j in range(features.shape[0]):
        f = features[j]
        for k in range(n):
            slot = orders[f, start + k]
            vbuf[k] = xs[slot, f]
            ybuf[k] = ys[slot]
        score, thr = _scan_sorted(vbuf, ybuf, n, mean, tol, min_leaf)
        if score > tol and (best_f == -1 or score > best_score + tol):
            best_f = f
            best_score = score
            best_thr = thr
    return best_f, best_thr, best_score


@numba.njit(cache=True)
def global_orders(Xf):
    """Row indices of ``Xf`` sorted by each column (stable), shape (p, N)."""
    p = Xf.shape[1]
    out = np.empty((p, Xf.shape[0]), dtype=np.int32)
    for f in range(p):
        out[f] = np.argsort(Xf[:, f], kind="mergesort")
    return out


@numba.njit(cache=True)
def _expand_orders(gorders, rows, n_total):
    """Sorted slot lists for the multiset ``rows``, derived from the global row orders.

    Slots are renumbered so copies of one row are contiguous; returns the new
    slot-to-row map and the (p, n) slot orders.
    """
    counts = np.zeros(n_total, dtype=np.int64)
    for r in rows:
        counts[r] += 1
    first = np.empty(n_total, dtype=np.int64)
    acc = 0
    for r in range(n_total):
        first[r] = acc
        acc += counts[r]
    slot_rows = np.empty(acc, dtype=np.int64)
    for r in range(n_total):
        for c in range(counts[r]):
            slot_rows[first[r] + c] = r
    p = gorders.shape[0]
    orders = np.empty((p, acc), dtype=np.int32)
    for f in range(p):
        k = 0
        for i in range(n_total):
            r = gorders[f, i]
            for c in range(counts[r]):
                orders[f, k] = first[r] + c
                k += 1
    return slot_rows, orders


@numba.njit(cache=True)
def _build_tree(Xf, y, gorders, sample_rows, n_sub, key, min_split, min_leaf, max_depth):
    rows, orders = _expand_orders(gorders, sample_rows, Xf.shape[0])
    n = rows.shape[0]
    p = Xf.shape[1]
    # slot-indexed, column-major copy: xs[slot, f] == Xf[rows[slot], f]
    xs = np.empty((p, n)).T
    ys = np.empty(n)
    for k in range(n):
        ys[k] = y[rows[k]]
    for f in range(p):
        for k in range(n):
            xs[k, f] = Xf[rows[k], f]

    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    gain = np.zeros(cap)

    goes_left = np.zeros(n, dtype=np.int64)
    buf = np.empty(n, dtype=np.int32)
    vbuf = np.empty(n)
    ybuf = np.empty(n)
    perm = np.arange(p)
    counter = 0
    stack = np.empty((cap, 4), dtype=np.int64)  # node, start, end, depth
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start
        total = 0.0
        lo = np.inf
        hi = -np.inf
        for k in range(start, end):
            v = ys[orders[0, k]]
            total += v
            lo = min(lo, v)
            hi = max(hi, v)
        value[node] = total / m
        count[node] = m
        if m < min_split or lo == hi or (max_depth >= 0 and depth >= max_depth):
            continue
        # partial Fisher-Yates: the first n_sub entries of perm become the subset
        for i in range(n_sub):
            u = draw_uniform(key, counter)
            counter += 1
            j = i + min(int(u * (p - i)), p - i - 1)
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
        subset = np.sort(perm[:n_sub])
        f, thr, score = _best_split_node(xs, ys, orders, start, end, subset, min_leaf, vbuf, ybuf)
        if f < 0:
            continue
        n_left = 0
        for k in range(start, end):
            slot = orders[0, k]
            gl = 1 if xs[slot, f] <= thr else 0
            goes_left[slot] = gl
            n_left += gl
        mid = start + n_left
        # branchless stable partition keeps every column's segment sorted
        for g in range(p):
            lpos = start
            rpos = 0
            for k in range(start, end):
                slot = orders[g, k]
                gl = goes_left[slot]
                orders[g, lpos] = slot
                buf[rpos] = slot
                lpos += gl
                rpos += 1 - gl
            for k in range(rpos):
                orders[g, mid + k] = buf[k]
        feature[node] = f
        threshold[node] = thr
        gain[node] = score
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is numbered first
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = mid
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = n_nodes
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        top += 1
        n_nodes += 2
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes], gain[:n_nodes])


@numba.njit(cache=True)
def _apply(feature, threshold, left, right, value, X, out, weight):
    for r in range(X.shape[0]):
        node = 0
        while feature[node] != -1:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] += weight * value[node]


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def is_leaf(self, node: int = 0) -> bool:
        return self.feature[node] == LEAF

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.zeros(X.shape[0])
        _apply(self.feature, self.threshold, self.left, self.right, self.value, X, out, 1.0)
        return out

    def same_as(self, other: "Tree") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("feature", "threshold", "left", "right", "value", "count"))


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    score: float


def best_split(X, y, feature_subset: Sequence[int] | None = None,
               min_samples_leaf: int = 1) -> Split | None:
    """Variance-reduction split over midpoints of consecutive distinct values.

    ``score`` is n*Var(y) - nL*Var(yL) - nR*Var(yR). Returns None when no split
    has positive gain. Ties go to the lower feature index, then the lower threshold.
    """
    Xf = np.asfortranarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if Xf.ndim != 2 or Xf.shape[0] != y.shape[0]:
        raise ValidationError("X must be 2-D with one row per target")
    feats = np.arange(Xf.shape[1]) if feature_subset is None else np.asarray(feature_subset)
    feats = np.unique(feats.astype(np.int64))
    rows, orders = _expand_orders(global_orders(Xf), np.arange(Xf.shape[0]), Xf.shape[0])
    xs = np.asfortranarray(Xf[rows])
    n = rows.shape[0]
    f, thr, score = _best_split_node(xs, y[rows], orders, 0, n, feats, int(min_samples_leaf),
                                     np.empty(n), np.empty(n))
    if f < 0:
        return None
    return Split(int(f), float(thr), float(score))


def n_split_features(rule: str, p: int) -> int:
    if rule == "third":
        return max(1, -(-p // 3))
    if rule == "sqrt":
        return max(1, int(np.sqrt(p)))
    if rule == "all":
        return p
    raise ValidationError(f"unknown max_features rule {rule!r}")


def fit_tree(X, y, rng: RngStream, *, max_features: str = "all", min_samples_split: int = 2,
             min_samples_leaf: int = 1, max_depth: int | None = None,
             sample_idx=None, orders=None) -> Tree:
    """Grow one tree on ``X[sample_idx]`` (default: every row once).

    Feature subsets are drawn per node from ``rng``'s key. ``orders`` may pass in
    :func:`global_orders` of ``X`` to share the presort across trees.
    """
    Xf = np.asfortranarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if Xf.ndim != 2 or Xf.shape[0] == 0:
        raise ValidationError("cannot fit a tree on an empty matrix")
    if Xf.shape[0] != y.shape[0]:
        raise ValidationError(f"X has {Xf.shape[0]} rows but y has {y.shape[0]}")
    if sample_idx is None:
        sample_idx = np.arange(Xf.shape[0], dtype=np.int64)
    n_sub = n_split_features(max_features, Xf.shape[1])
    if orders is None:
        orders = global_orders(Xf)
    arrays = _build_tree(Xf, y, orders, np.asarray(sample_idx, dtype=np.int64), n_sub, rng.key,
                         int(min_samples_split), int(min_samples_leaf),
                         -1 if max_depth is None else int(max_depth))
    return Tree(*arrays)

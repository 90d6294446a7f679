"""Random-forest teacher for the distilled trees.

Trees are grown to purity on bootstrap resamples (expressed as integer row weights)
with a fresh random feature subset at every split. Splits minimise weighted child
variance, which on 0/1 labels ranks candidates exactly like Gini impurity.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

import numba
import numpy as np

from .criteria import TIE_RTOL
from .data import DataError, Dataset, EmptyDataset
from .tree import Internal, Leaf, TreeNode


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: Union[str, int] = "sqrt"
    bootstrap: bool = True
    min_split: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_split < 2:
            raise ValueError("min_split must be >= 2")
        if isinstance(self.max_features, str) and self.max_features not in ("sqrt", "all"):
            raise ValueError("max_features must be 'sqrt', 'all' or an integer")

    def n_candidates(self, p: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(p)))
        if self.max_features == "all":
            return p
        k = int(self.max_features)
        if not 1 <= k <= p:
            raise ValueError(f"max_features={k} outside [1, {p}]")
        return k


@dataclass(frozen=True)
class FlatTree:
    """Array-encoded tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray

    def to_node(self, i: int = 0) -> TreeNode:
        if self.feature[i] < 0:
            return Leaf(float(self.value[i]), int(self.weight[i]))
        return Internal(
            int(self.feature[i]),
            float(self.threshold[i]),
            self.to_node(int(self.left[i])),
            self.to_node(int(self.right[i])),
            float(self.value[i]),
            int(self.weight[i]),
        )

    @classmethod
    def from_node(cls, tree: TreeNode) -> "FlatTree":
        feat, thr, left, right, val, w = [], [], [], [], [], []

        def visit(node: TreeNode) -> int:
            i = len(feat)
            for col in (feat, thr, left, right, val, w):
                col.append(0)
            val[i] = node.value
            w[i] = node.samples
            if isinstance(node, Leaf):
                feat[i], thr[i], left[i], right[i] = -1, 0.0, -1, -1
            else:
                feat[i], thr[i] = node.feature_index, node.threshold
                left[i] = visit(node.left)
                right[i] = visit(node.right)
            return i

        visit(tree)
        return cls(
            np.array(feat, dtype=np.int64),
            np.array(thr, dtype=float),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(val, dtype=float),
            np.array(w, dtype=float),
        )


@dataclass(frozen=True)
class Forest:
    trees: tuple[FlatTree, ...]
    n_features: int

    @classmethod
    def from_nodes(cls, trees: Sequence[TreeNode], n_features: int) -> "Forest":
        return cls(tuple(FlatTree.from_node(t) for t in trees), n_features)

    def nodes(self) -> list[TreeNode]:
        return [t.to_node() for t in self.trees]


@numba.njit(cache=True, nogil=True)
def _grow(X, y, w, n_candidates, min_split, seed, rtol):
    np.random.seed(seed)
    n, p = X.shape
    rows = np.flatnonzero(w > 0)
    m = rows.size
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    weight = np.zeros(cap)

    # stack of (node id, start, end) over the ``rows`` buffer
    stack = np.empty((cap, 3), dtype=np.int64)
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, m
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node, start, end = stack[top, 0], stack[top, 1], stack[top, 2]
        seg = rows[start:end]
        wsum = 0.0
        wy = 0.0
        wy2 = 0.0
        for r in seg:
            wsum += w[r]
            wy += w[r] * y[r]
            wy2 += w[r] * y[r] * y[r]
        value[node] = wy / wsum
        weight[node] = wsum
        ymin = y[seg[0]]
        ymax = y[seg[0]]
        for r in seg:
            ymin = min(ymin, y[r])
            ymax = max(ymax, y[r])
        if ymin == ymax or seg.size < min_split:
            continue

        best_obj = np.inf
        best_thr = 0.0
        best_f = -1
        perm = np.random.permutation(p)
        visited = 0
        for f in perm:
            if visited >= n_candidates:
                break
            xs = X[seg, f]
            order = np.argsort(xs, kind="mergesort")
            if xs[order[0]] == xs[order[-1]]:
                continue
            visited += 1
            lw = 0.0
            ly = 0.0
            ly2 = 0.0
            for i in range(seg.size - 1):
                r = seg[order[i]]
                lw += w[r]
                ly += w[r] * y[r]
                ly2 += w[r] * y[r] * y[r]
                a = xs[order[i]]
                b = xs[order[i + 1]]
                if not a < b:
                    continue
                rw = wsum - lw
                ry = wy - ly
                ry2 = wy2 - ly2
                obj = (max(ly2 - ly * ly / lw, 0.0) + max(ry2 - ry * ry / rw, 0.0)) / wsum
                thr = (a + b) / 2.0
                if not thr < b:
                    thr = a
                tol = rtol * max(1.0, abs(best_obj)) if best_obj < np.inf else 0.0
                if obj < best_obj - tol:
                    better = True
                elif obj <= best_obj + tol:
                    better = thr < best_thr or (thr == best_thr and f < best_f)
                else:
                    better = False
                if better:
                    best_obj = obj
                    best_thr = thr
                    best_f = f
        if best_f < 0:
            continue

        # partition seg in place: x <= thr first
        i = start
        j = end - 1
        while i <= j:
            if X[rows[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = rows[i]
                rows[i] = rows[j]
                rows[j] = tmp
                j -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top, 0], stack[top, 1], stack[top, 2] = n_nodes + 1, i, end
        top += 1
        stack[top, 0], stack[top, 1], stack[top, 2] = n_nodes, start, i
        top += 1
        n_nodes += 2
    k = n_nodes
    return feature[:k], threshold[:k], left[:k], right[:k], value[:k], weight[:k]


@numba.njit(cache=True, nogil=True)
def _predict_flat(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def _tree_streams(config: ForestConfig, n: int):
    """Per-tree (bootstrap weights, kernel seed), independent given the forest seed."""
    children = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    for child in children:
        rng = np.random.default_rng(child)
        if config.bootstrap:
            w = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        else:
            w = np.ones(n)
        yield w, int(rng.integers(0, 2**31 - 1))


def fit_forest(dataset: Dataset, config: ForestConfig = ForestConfig(), jobs: int = 1) -> Forest:
    if dataset.n_rows == 0:
        raise EmptyDataset("cannot fit a forest on an empty dataset")
    if not dataset.binary:
        raise DataError("the forest teacher needs binary labels")
    X = np.ascontiguousarray(dataset.X)
    y = np.ascontiguousarray(dataset.y, dtype=float)
    k = config.n_candidates(dataset.n_features)

    def one(stream):
        w, seed = stream
        return FlatTree(*_grow(X, y, w, k, config.min_split, seed, TIE_RTOL))

    streams = list(_tree_streams(config, dataset.n_rows))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = tuple(pool.map(one, streams))
    else:
        trees = tuple(one(s) for s in streams)
    return Forest(trees, dataset.n_features)


def predict_proba(forest: Forest, data) -> np.ndarray:
    """Mean over trees of the leaf class-1 fraction."""
    X = data.X if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[1] != forest.n_features:
        raise DataError(f"feature-count mismatch: forest expects {forest.n_features}, data has {X.shape[1]}")
    X = np.ascontiguousarray(X, dtype=float)
    total = np.zeros(X.shape[0])
    for t in forest.trees:
        total += _predict_flat(X, t.feature, t.threshold, t.left, t.right, t.value)
    return total / len(forest.trees)

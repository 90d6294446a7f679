"""Split objectives and best-split searches.

Every search scans candidate thresholds in ascending order using running sums, so
the cost per feature is one pass over the node's presorted rows. Thresholds are
midpoints between consecutive distinct values and rows with ``x <= threshold`` go
left.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Dataset, Method

WeightFn = Callable[[np.ndarray], np.ndarray]

# Objectives closer than this (relative) are treated as tied.
TIE_RTOL = 1e-12


class NoValidSplit(Exception):
    """No candidate threshold leaves both children non-empty and above the min leaf size."""


def _w_linear(d):
    return 1.0 - d


def _w_quadratic(d):
    return (1.0 - d) ** 2


def _w_exponential(d):
    return np.exp(-d)


WEIGHTS: dict[str, WeightFn] = {
    "linear": _w_linear,
    "quadratic": _w_quadratic,
    "exponential": _w_exponential,
}


@dataclass(frozen=True)
class SplitCriterion:
    kind: Method = Method.CART
    c: float = 0.5
    lam: float = 0.1
    weight_fn: str = "linear"
    form: str = "convex"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Method.parse(self.kind))
        if self.kind is Method.MDFS:
            # MDFS is the pure distance objective
            object.__setattr__(self, "lam", 1.0)
            object.__setattr__(self, "weight_fn", "linear")
            object.__setattr__(self, "form", "convex")
        if self.weight_fn not in WEIGHTS:
            raise ValueError(f"unknown weight function {self.weight_fn!r}")

    @property
    def W(self) -> WeightFn:
        return WEIGHTS[self.weight_fn]

    @classmethod
    def from_config(cls, config) -> "SplitCriterion":
        return cls(config.method, config.threshold, config.pfs_lambda, config.weight_fn, config.pfs_form)


@dataclass(frozen=True)
class SplitDecision:
    feature_index: int
    threshold: float
    objective_value: float
    left_count: int
    right_count: int


def candidate_thresholds(feature_values: Sequence[float]) -> np.ndarray:
    v = np.unique(np.asarray(feature_values, dtype=float))
    return _midpoints(v[:-1], v[1:])


def _midpoints(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    mid = (lo + hi) / 2.0
    # adjacent floats: the midpoint can round up onto ``hi``
    return np.where(mid < hi, mid, lo)


# -- objectives on explicit partitions ---------------------------------------------


def _parts(left, right):
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    n = left.size + right.size
    if n == 0:
        raise ValueError("left and right are both empty")
    return left, right, n


def _mean(a: np.ndarray) -> float:
    return float(a.mean()) if a.size else 0.0


def impurity(left: Sequence[float], right: Sequence[float]) -> float:
    """Size-weighted population variance of the two children."""
    left, right, n = _parts(left, right)
    vl = float(left.var()) if left.size else 0.0
    vr = float(right.var()) if right.size else 0.0
    return vl * left.size / n + vr * right.size / n


def distance_penalty(left: Sequence[float], right: Sequence[float], c: float, W: WeightFn = _w_linear) -> float:
    left, right, n = _parts(left, right)
    total = 0.0
    if left.size:
        total += float(W(abs(c - _mean(left)))) * left.size / n
    if right.size:
        total += float(W(abs(c - _mean(right)))) * right.size / n
    return total


def weighted_risk(left: Sequence[float], right: Sequence[float], c: float) -> float:
    """Cost-weighted count of rows landing on the wrong side of ``c``.

    A child whose mean equals ``c`` exactly counts as not targeted.
    """
    left, right, _ = _parts(left, right)
    risk = 0.0
    for part in (left, right):
        if not part.size:
            continue
        above = int(np.count_nonzero(part > c))
        if _mean(part) > c:
            risk += (part.size - above) * c
        else:
            risk += above * (1.0 - c)
    return risk


def final_objective(
    left: Sequence[float],
    right: Sequence[float],
    criterion: SplitCriterion,
    dist_left: Optional[Sequence[float]] = None,
    dist_right: Optional[Sequence[float]] = None,
) -> float:
    """Objective minimised by ``find_final_split``, recomputed from scratch.

    ``dist_left``/``dist_right`` optionally supply the responses used for the distance
    and risk terms (the distilled grower scores them on observed labels).
    """
    if dist_left is None:
        dist_left, dist_right = left, right
    kind = criterion.kind
    if kind is Method.CART:
        return impurity(left, right)
    if kind is Method.WEFS:
        return weighted_risk(dist_left, dist_right, criterion.c)
    pen = distance_penalty(dist_left, dist_right, criterion.c, criterion.W)
    lam = criterion.lam
    if lam == 1.0 and criterion.form == "convex":
        return pen
    imp = impurity(left, right)
    if criterion.form == "additive":
        return imp + lam * pen
    return (1.0 - lam) * imp + lam * pen


# -- streaming scans ---------------------------------------------------------------


def _candidate_positions(v: np.ndarray, min_leaf: int) -> np.ndarray:
    """Left-child sizes k at which a split between v[k-1] and v[k] is admissible."""
    n = v.size
    k = np.arange(1, n)
    ok = v[1:] > v[:-1]
    ok &= (k >= min_leaf) & (n - k >= min_leaf)
    return k[ok]


def _scan_objective(
    y: np.ndarray,
    k: np.ndarray,
    criterion: SplitCriterion,
    dist: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Objective at each left-size in ``k`` for responses sorted by the feature."""
    n = y.size
    nl = k.astype(float)
    nr = n - nl

    def impurity_at():
        s1 = np.cumsum(y)
        s2 = np.cumsum(y * y)
        l1, l2 = s1[k - 1], s2[k - 1]
        r1, r2 = s1[-1] - l1, s2[-1] - l2
        ssl = np.maximum(l2 - l1 * l1 / nl, 0.0)
        ssr = np.maximum(r2 - r1 * r1 / nr, 0.0)
        return (ssl + ssr) / n

    kind = criterion.kind
    if kind is Method.CART:
        return impurity_at()
    d = y if dist is None else dist
    s1 = np.cumsum(d)
    ml = s1[k - 1] / nl
    mr = (s1[-1] - s1[k - 1]) / nr
    c = criterion.c
    if kind is Method.WEFS:
        above = np.cumsum(d > c)
        al = above[k - 1]
        ar = above[-1] - al
        tl = ml > c
        tr = mr > c
        return (np.where(tl, nl - al, 0.0) + np.where(tr, nr - ar, 0.0)) * c + (
            np.where(tl, 0.0, al) + np.where(tr, 0.0, ar)
        ) * (1.0 - c)
    W = criterion.W
    pen = (nl * W(np.abs(c - ml)) + nr * W(np.abs(c - mr))) / n
    lam = criterion.lam
    if lam == 1.0 and criterion.form == "convex":
        return pen
    if criterion.form == "additive":
        return impurity_at() + lam * pen
    return (1.0 - lam) * impurity_at() + lam * pen


def select_best(objectives: np.ndarray, thresholds: np.ndarray, features: Optional[np.ndarray] = None) -> int:
    """Index of the winning candidate.

    Candidates within ``TIE_RTOL`` of the minimum are tied; ties go to the smallest
    threshold, then to the smallest feature index.
    """
    best = objectives.min()
    tied = np.flatnonzero(objectives <= best + TIE_RTOL * max(1.0, abs(best)))
    if features is None:
        return int(tied[np.argmin(thresholds[tied])])
    order = np.lexsort((features[tied], thresholds[tied]))
    return int(tied[order[0]])


def scan_feature(
    v: np.ndarray,
    y: np.ndarray,
    criterion: SplitCriterion,
    min_leaf: int = 1,
    dist: Optional[np.ndarray] = None,
):
    """All admissible candidates of one presorted feature: (k, thresholds, objectives)."""
    k = _candidate_positions(v, min_leaf)
    if k.size == 0:
        return k, np.empty(0), np.empty(0)
    thr = _midpoints(v[k - 1], v[k])
    return k, thr, _scan_objective(y, k, criterion, dist)


_CART = SplitCriterion(Method.CART)


def best_split_presorted(
    X: np.ndarray,
    y: np.ndarray,
    sorted_rows: Sequence[np.ndarray],
    min_leaf: int = 1,
    features: Optional[Sequence[int]] = None,
) -> SplitDecision:
    """CART split of one node given, for each feature, its rows in ascending order."""
    js, ks, thrs, objs = [], [], [], []
    for j in range(X.shape[1]) if features is None else features:
        rows = sorted_rows[j]
        k, thr, obj = scan_feature(X[rows, j], y[rows], _CART, min_leaf)
        if k.size:
            js.append(np.full(k.size, j))
            ks.append(k)
            thrs.append(thr)
            objs.append(obj)
    if not objs:
        raise NoValidSplit("no admissible split on this node")
    js, ks, thrs, objs = (np.concatenate(a) for a in (js, ks, thrs, objs))
    i = select_best(objs, thrs, js)
    n = len(sorted_rows[js[i]])
    return SplitDecision(int(js[i]), float(thrs[i]), float(objs[i]), int(ks[i]), int(n - ks[i]))


def sorted_subset(dataset: Dataset, rows: np.ndarray) -> list[np.ndarray]:
    """Per-feature ascending orderings of ``rows`` derived from the dataset presort."""
    member = np.zeros(dataset.n_rows, dtype=bool)
    member[rows] = True
    return [order[member[order]] for order in dataset.sort_order]


def find_best_split_cart(
    dataset: Dataset,
    row_subset: Optional[Sequence[int]] = None,
    min_leaf: int = 1,
    response: Optional[np.ndarray] = None,
) -> SplitDecision:
    """Impurity-minimising (feature, midpoint) over all features of the row subset."""
    rows = np.arange(dataset.n_rows) if row_subset is None else np.asarray(row_subset, dtype=np.int64)
    if rows.size < 2:
        raise NoValidSplit("need at least two rows")
    y = dataset.y if response is None else np.asarray(response, dtype=float)
    return best_split_presorted(dataset.X, y, sorted_subset(dataset, rows), min_leaf)


def find_final_split(
    feature_values: Sequence[float],
    responses: Sequence[float],
    criterion: SplitCriterion,
    min_leaf: int = 1,
    dist_responses: Optional[Sequence[float]] = None,
    feature_index: int = 0,
) -> SplitDecision:
    """Re-place the threshold on an already chosen feature using ``criterion``.

    ``responses`` drive the impurity term; ``dist_responses`` (default: the same)
    drive the distance-penalty and weighted-risk terms.
    """
    x = np.asarray(feature_values, dtype=float)
    y = np.asarray(responses, dtype=float)
    order = np.argsort(x, kind="stable")
    d = None if dist_responses is None else np.asarray(dist_responses, dtype=float)[order]
    k, thr, obj = scan_feature(x[order], y[order], criterion, min_leaf, d)
    if k.size == 0:
        raise NoValidSplit("no admissible threshold on this feature")
    i = select_best(obj, thr)
    return SplitDecision(feature_index, float(thr[i]), float(obj[i]), int(k[i]), int(x.size - k[i]))

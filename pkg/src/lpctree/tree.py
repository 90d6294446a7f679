"""Tree growth with modified final splits, prediction, rendering and policy extraction.

Upper splits are always plain CART. A *final split* is a split whose two children
are both terminal (depth cap, purity, too few rows to split, or no admissible split);
only there is the threshold on the CART-chosen feature re-placed with the PFS, MDFS
or wEFS objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .criteria import NoValidSplit, SplitCriterion, best_split_presorted, find_final_split
from .data import DataError, Dataset, Method, TrainConfig


@dataclass(frozen=True)
class Leaf:
    value: float
    samples: int


@dataclass(frozen=True)
class Internal:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    value: float
    samples: int
    final: bool = False


TreeNode = Union[Leaf, Internal]


class _Grower:
    def __init__(
        self,
        dataset: Dataset,
        response: np.ndarray,
        config: TrainConfig,
        distilled: bool = False,
        labels: Optional[np.ndarray] = None,
        cache: Optional[dict] = None,
    ):
        self.X = dataset.X
        self.n = dataset.n_rows
        self.y = response
        self.config = config
        self.distilled = distilled
        self.labels = labels
        self.min_leaf = config.min_leaf(self.n)
        self.criterion = SplitCriterion.from_config(config)
        self.cache = {} if cache is None else cache

    def _terminal(self, rows: np.ndarray, depth: int) -> bool:
        if depth >= self.config.max_depth or rows.size < 2 * self.min_leaf:
            return True
        yv = self.y[rows]
        lo, hi = yv.min(), yv.max()
        if self.distilled:
            c = self.config.threshold
            return lo > c or hi < c
        return lo == hi

    def _cart_split(self, path: str, sorted_rows):
        key = (self.min_leaf, path)
        if key not in self.cache:
            try:
                self.cache[key] = best_split_presorted(self.X, self.y, sorted_rows, self.min_leaf)
            except NoValidSplit:
                self.cache[key] = None
        return self.cache[key]

    def _leaf(self, rows: np.ndarray) -> Leaf:
        return Leaf(float(self.y[rows].mean()), int(rows.size))

    def _partition(self, sorted_rows, feature: int, threshold: float):
        rows = sorted_rows[0]
        mask = np.zeros(self.n, dtype=bool)
        mask[rows[self.X[rows, feature] <= threshold]] = True
        left = [s[mask[s]] for s in sorted_rows]
        right = [s[~mask[s]] for s in sorted_rows]
        return left, right

    def _will_be_leaf(self, sorted_rows, depth: int, path: str) -> bool:
        return self._terminal(sorted_rows[0], depth) or self._cart_split(path, sorted_rows) is None

    def grow(self, sorted_rows, depth: int = 0, path: str = "") -> TreeNode:
        rows = sorted_rows[0]
        if self._terminal(rows, depth):
            return self._leaf(rows)
        split = self._cart_split(path, sorted_rows)
        if split is None:
            return self._leaf(rows)
        f = split.feature_index
        left, right = self._partition(sorted_rows, f, split.threshold)
        value = float(self.y[rows].mean())
        final = self._will_be_leaf(left, depth + 1, path + "L") and self._will_be_leaf(
            right, depth + 1, path + "R"
        )
        if final and self.config.method is not Method.CART:
            threshold = self._final_threshold(sorted_rows[f], f)
            left, right = self._partition(sorted_rows, f, threshold)
            return Internal(
                f, threshold, self._leaf(left[0]), self._leaf(right[0]), value, int(rows.size), True
            )
        return Internal(
            f,
            split.threshold,
            self.grow(left, depth + 1, path + "L"),
            self.grow(right, depth + 1, path + "R"),
            value,
            int(rows.size),
            final,
        )

    def _final_threshold(self, rows_by_f: np.ndarray, f: int) -> float:
        crit = self.criterion
        dist = None
        if self.labels is not None and crit.kind in (Method.PFS, Method.MDFS):
            dist = self.labels[rows_by_f]
        dec = find_final_split(
            self.X[rows_by_f, f], self.y[rows_by_f], crit, self.min_leaf, dist, feature_index=f
        )
        return dec.threshold


def _all_rows(dataset: Dataset) -> list[np.ndarray]:
    return [order.copy() for order in dataset.sort_order]


def grow_tree(dataset: Dataset, config: TrainConfig, cache: Optional[dict] = None) -> TreeNode:
    """Grow a tree on binary labels.

    ``cache`` memoises CART splits by node path; it may be shared between calls that
    use the same dataset and labels (for instance different methods, thresholds or
    depths) because the upper CART structure does not depend on them.
    """
    if not dataset.binary:
        raise DataError("grow_tree needs binary responses; use grow_tree_kd for probabilities")
    return _Grower(dataset, dataset.y, config, cache=cache).grow(_all_rows(dataset))


def grow_tree_kd(
    dataset: Dataset,
    teacher_probs: Sequence[float],
    config: TrainConfig,
    cache: Optional[dict] = None,
) -> TreeNode:
    """Grow a distilled student tree on teacher probabilities.

    A node stops once every teacher probability lies on one side of ``c``. Leaf values
    are mean teacher probabilities.
    """
    p = np.asarray(teacher_probs, dtype=float)
    if p.shape != (dataset.n_rows,):
        raise DataError(f"teacher_probs has {p.size} values, dataset has {dataset.n_rows} rows")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise DataError("teacher_probs outside [0,1]")
    labels = dataset.y if config.kd_labels_for_distance else None
    return _Grower(dataset, p, config, distilled=True, labels=labels, cache=cache).grow(_all_rows(dataset))


# -- prediction --------------------------------------------------------------------


def _features(data) -> np.ndarray:
    return data.X if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))


def n_features_used(tree: TreeNode) -> int:
    if isinstance(tree, Leaf):
        return 0
    return max(tree.feature_index + 1, n_features_used(tree.left), n_features_used(tree.right))


def predict(tree: TreeNode, data, n_features: Optional[int] = None) -> np.ndarray:
    """Leaf value for every row; ``x <= threshold`` routes left."""
    X = _features(data)
    if n_features is not None and X.shape[1] != n_features:
        raise DataError(f"feature-count mismatch: tree expects {n_features}, data has {X.shape[1]}")
    if X.shape[1] < n_features_used(tree):
        raise DataError("feature-count mismatch: tree references a missing feature")
    out = np.empty(X.shape[0])
    stack = [(tree, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if isinstance(node, Leaf):
            out[idx] = node.value
            continue
        go_left = X[idx, node.feature_index] <= node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def iter_leaves(tree: TreeNode, path: tuple = ()):
    """Yield ``(leaf, path)`` left to right; path items are (feature, threshold, went_left)."""
    if isinstance(tree, Leaf):
        yield tree, path
        return
    yield from iter_leaves(tree.left, path + ((tree.feature_index, tree.threshold, True),))
    yield from iter_leaves(tree.right, path + ((tree.feature_index, tree.threshold, False),))


def iter_internal(tree: TreeNode, path: str = ""):
    if isinstance(tree, Internal):
        yield path, tree
        yield from iter_internal(tree.left, path + "L")
        yield from iter_internal(tree.right, path + "R")


def depth(tree: TreeNode) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(depth(tree.left), depth(tree.right))


# -- rendering ---------------------------------------------------------------------


def format_threshold(t: float) -> str:
    return repr(round(float(t), 8))


def _name(j: int, feature_names: Optional[Sequence[str]]) -> str:
    if feature_names is not None and j < len(feature_names):
        return feature_names[j]
    return f"x{j + 1}"


def render_tree(tree: TreeNode, feature_names: Optional[Sequence[str]] = None) -> str:
    lines: list[str] = []

    def walk(node: TreeNode, level: int) -> None:
        pad = "    " * level
        if isinstance(node, Leaf):
            lines.append(f"{pad}value: {node.value:.3f}, samples: {node.samples}")
            return
        name = _name(node.feature_index, feature_names)
        lines.append(f"{pad}if {name} <= {format_threshold(node.threshold)}")
        walk(node.left, level + 1)
        walk(node.right, level + 1)

    walk(tree, 0)
    return "\n".join(lines)


# -- policy ------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetedLeaf:
    predicate: str
    value: float
    samples: int


@dataclass(frozen=True)
class PolicyReport:
    c: float
    n: int
    targeted_leaves: tuple[TargetedLeaf, ...] = field(default_factory=tuple)

    @property
    def cost(self) -> float:
        """Targeted fraction of the training sample."""
        return sum(t.samples for t in self.targeted_leaves) / self.n if self.n else 0.0

    def subgroups(self) -> set[tuple[float, int]]:
        return {(round(t.value, 3), t.samples) for t in self.targeted_leaves}


def _predicate(path, feature_names) -> str:
    if not path:
        return "all"
    parts = []
    for j, thr, went_left in path:
        op = "<=" if went_left else ">"
        parts.append(f"{_name(j, feature_names)} {op} {format_threshold(thr)}")
    return " and ".join(parts)


def policy_report(tree: TreeNode, c: float, feature_names: Optional[Sequence[str]] = None) -> PolicyReport:
    """Leaves whose value exceeds ``c`` and the share of the sample they cover."""
    n = 0
    targeted = []
    for leaf, path in iter_leaves(tree):
        n += leaf.samples
        if leaf.value > c:
            targeted.append(TargetedLeaf(_predicate(path, feature_names), leaf.value, leaf.samples))
    return PolicyReport(c, n, tuple(targeted))


# -- persistence -------------------------------------------------------------------


def tree_to_dict(tree: TreeNode, feature_names: Optional[Sequence[str]] = None) -> dict:
    """Flat preorder node list; children referenced by node id."""
    nodes: list[dict] = []

    def visit(node: TreeNode) -> int:
        nid = len(nodes)
        if isinstance(node, Leaf):
            nodes.append({"id": nid, "leaf": True, "value": node.value, "samples": node.samples})
            return nid
        entry = {
            "id": nid,
            "leaf": False,
            "feature": node.feature_index,
            "threshold": node.threshold,
            "value": node.value,
            "samples": node.samples,
            "final": node.final,
        }
        nodes.append(entry)
        entry["left"] = visit(node.left)
        entry["right"] = visit(node.right)
        return nid

    visit(tree)
    out: dict = {"nodes": nodes}
    if feature_names is not None:
        out["feature_names"] = list(feature_names)
    return out


def tree_from_dict(data: dict) -> TreeNode:
    nodes = {n["id"]: n for n in data["nodes"]}

    def build(nid: int) -> TreeNode:
        n = nodes[nid]
        if n["leaf"]:
            return Leaf(float(n["value"]), int(n["samples"]))
        return Internal(
            int(n["feature"]),
            float(n["threshold"]),
            build(n["left"]),
            build(n["right"]),
            float(n["value"]),
            int(n["samples"]),
            bool(n.get("final", False)),
        )

    return build(0)


def tree_to_json(tree: TreeNode, feature_names: Optional[Sequence[str]] = None) -> str:
    return json.dumps(tree_to_dict(tree, feature_names), indent=1, sort_keys=True)


def tree_from_json(text: str) -> TreeNode:
    return tree_from_dict(json.loads(text))

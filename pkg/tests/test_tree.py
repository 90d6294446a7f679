from __future__ import annotations

import json

import numpy as np
import pytest
from conftest import make_dataset

from lpctree.data import DataError, EmptyDataset, Method, TrainConfig, validate_dataset
from lpctree.tree import (
    Internal,
    Leaf,
    depth,
    grow_tree,
    grow_tree_kd,
    iter_internal,
    iter_leaves,
    policy_report,
    predict,
    render_tree,
    tree_from_json,
    tree_to_json,
)

NON_CART = (Method.PFS, Method.MDFS, Method.WEFS)


def _cfg(method=Method.CART, **kw):
    kw.setdefault("max_depth", 4)
    kw.setdefault("min_leaf_fraction", 0.01)
    kw.setdefault("threshold", 0.6)
    return TrainConfig(method=method, **kw)


def _leaf_rows(tree, X):
    """Map each leaf (by id) to the training rows routed to it, by direct routing."""
    out = {}
    for i, row in enumerate(X):
        node = tree
        while isinstance(node, Internal):
            node = node.left if row[node.feature_index] <= node.threshold else node.right
        out.setdefault(id(node), (node, []))[1].append(i)
    return out.values()


def _check_invariants(tree, ds, response, cfg):
    assert depth(tree) <= cfg.max_depth
    leaves = [leaf for leaf, _ in iter_leaves(tree)]
    assert sum(leaf.samples for leaf in leaves) == ds.n_rows
    for leaf, rows in _leaf_rows(tree, ds.X):
        assert leaf.samples == len(rows)
        assert leaf.value == pytest.approx(response[rows].mean(), abs=1e-12)
    for _, node in iter_internal(tree):
        mix = (node.left.samples * node.left.value + node.right.samples * node.right.value) / node.samples
        assert mix == pytest.approx(node.value, abs=1e-9)


@pytest.mark.parametrize("method", list(Method))
@pytest.mark.parametrize("seed", range(5))
def test_structural_invariants(method, seed):
    rng = np.random.default_rng(seed)
    ds = make_dataset(rng, n=400, p=4, levels=12)
    cfg = _cfg(method, max_depth=1 + seed % 4, min_leaf_fraction=0.02)
    tree = grow_tree(ds, cfg)
    _check_invariants(tree, ds, ds.y, cfg)
    np.testing.assert_array_equal(predict(tree, ds), predict(tree, ds.X))


@pytest.mark.parametrize("method", NON_CART)
@pytest.mark.parametrize("seed", range(6))
def test_non_final_splits_match_cart(method, seed):
    rng = np.random.default_rng(100 + seed)
    ds = make_dataset(rng, n=500, p=3, levels=20, prob=lambda X: 0.1 + 0.8 * X[:, 0] * X[:, 1])
    cart = dict(iter_internal(grow_tree(ds, _cfg(max_depth=4, min_leaf_fraction=0.02))))
    other = dict(iter_internal(grow_tree(ds, _cfg(method, max_depth=4, min_leaf_fraction=0.02))))
    for path, node in other.items():
        ref = cart[path]
        assert node.feature_index == ref.feature_index
        if not node.final:
            assert node.threshold == ref.threshold
    assert {p for p, n in cart.items() if not n.final} == {p for p, n in other.items() if not n.final}


def test_final_flag_only_when_both_children_are_leaves(rng):
    ds = make_dataset(rng, n=300, p=3)
    tree = grow_tree(ds, _cfg(Method.MDFS, max_depth=3))
    for _, node in iter_internal(tree):
        both = isinstance(node.left, Leaf) and isinstance(node.right, Leaf)
        if node.final:
            assert both


def test_depth_one_mdfs_is_a_single_modified_split():
    x = np.linspace(0, 1, 400)
    y = (x > 0.3).astype(float)
    y[::7] = 1.0 - y[::7]
    ds = validate_dataset({"x": x}, y)
    tree = grow_tree(ds, _cfg(Method.MDFS, max_depth=1, threshold=0.75))
    assert isinstance(tree, Internal) and tree.final
    assert isinstance(tree.left, Leaf) and isinstance(tree.right, Leaf)


def test_pure_node_gives_single_leaf():
    ds = validate_dataset({"a": [1, 2, 3]}, [1, 1, 1])
    assert grow_tree(ds, _cfg()) == Leaf(1.0, 3)


def test_no_valid_split_gives_leaf():
    ds = validate_dataset({"a": [1, 1, 1, 1]}, [0, 1, 0, 1])
    assert grow_tree(ds, _cfg(Method.MDFS)) == Leaf(0.5, 4)


def test_empty_dataset_is_rejected():
    with pytest.raises(EmptyDataset):
        validate_dataset({"a": []}, [])


def test_grow_tree_rejects_probabilities():
    ds = validate_dataset({"a": [1, 2]}, [0.2, 0.7], binary=False)
    with pytest.raises(DataError):
        grow_tree(ds, _cfg())


@pytest.mark.parametrize("method", list(Method))
def test_min_leaf_respected(method, rng):
    ds = make_dataset(rng, n=300, p=3, levels=50)
    cfg = _cfg(method, max_depth=6, min_leaf_fraction=0.05)
    tree = grow_tree(ds, cfg)
    m = cfg.min_leaf(ds.n_rows)
    assert all(leaf.samples >= m for leaf, _ in iter_leaves(tree))


# -- distillation ------------------------------------------------------------------


@pytest.mark.parametrize("method", list(Method))
def test_kd_with_binary_teacher_equals_grow_tree(method, rng):
    ds = make_dataset(rng, n=300, p=3, levels=15)
    cfg = _cfg(method, max_depth=3, threshold=0.6)
    assert grow_tree_kd(ds, ds.y, cfg) == grow_tree(ds, cfg)


def test_kd_threshold_pure_stop(rng):
    ds = make_dataset(rng, n=100)
    p = 0.7 + 0.2 * rng.random(100)
    tree = grow_tree_kd(ds, p, _cfg(threshold=0.6))
    assert isinstance(tree, Leaf) and tree.value == pytest.approx(p.mean())


def test_kd_invariants(rng):
    ds = make_dataset(rng, n=400, p=3)
    p = np.clip(0.2 + 0.6 * ds.X[:, 0] + 0.1 * rng.standard_normal(400), 0, 1)
    cfg = _cfg(Method.MDFS, max_depth=3)
    _check_invariants(grow_tree_kd(ds, p, cfg), ds, p, cfg)


def test_kd_rejects_bad_teacher(rng):
    ds = make_dataset(rng, n=10)
    with pytest.raises(DataError):
        grow_tree_kd(ds, np.full(9, 0.5), _cfg())
    with pytest.raises(DataError):
        grow_tree_kd(ds, np.full(10, 1.5), _cfg())


# -- prediction --------------------------------------------------------------------


def test_predict_examples():
    assert np.all(predict(Leaf(0.3, 5), np.zeros((4, 2))) == 0.3)
    y = [0, 1, 1, 0, 1]
    ds = validate_dataset({"copy": y}, y)
    np.testing.assert_array_equal(predict(grow_tree(ds, _cfg(min_leaf_fraction=0.01)), ds), y)


def test_predict_depth_two_by_hand():
    tree = Internal(0, 0.5, Internal(1, 0.5, Leaf(0.1, 1), Leaf(0.2, 1), 0.15, 2),
                    Internal(1, 0.5, Leaf(0.3, 1), Leaf(0.4, 1), 0.35, 2), 0.25, 4)
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1], [0.5, 0.5]])
    np.testing.assert_array_equal(predict(tree, X), [0.1, 0.2, 0.3, 0.4, 0.1])


def test_predict_feature_mismatch():
    tree = Internal(2, 0.5, Leaf(0.0, 1), Leaf(1.0, 1), 0.5, 2)
    with pytest.raises(DataError):
        predict(tree, np.zeros((3, 2)))
    with pytest.raises(DataError):
        predict(Leaf(0.1, 1), np.zeros((3, 2)), n_features=3)


# -- rendering and persistence ------------------------------------------------------


def test_render_examples():
    assert render_tree(Leaf(0.5, 10)) == "value: 0.500, samples: 10"
    tree = Internal(0, 127.5, Leaf(0.25, 3), Leaf(0.875, 8), 0.7, 11)
    assert render_tree(tree, ["Glucose"]) == (
        "if Glucose <= 127.5\n    value: 0.250, samples: 3\n    value: 0.875, samples: 8"
    )


def test_json_round_trip(rng):
    ds = make_dataset(rng, n=300, p=3)
    tree = grow_tree(ds, _cfg(Method.PFS, max_depth=4))
    text = tree_to_json(tree, ds.feature_names)
    assert tree_from_json(text) == tree
    assert "feature_names" in json.loads(text)


# -- policies ----------------------------------------------------------------------


def test_policy_no_targets():
    rep = policy_report(Internal(0, 0.5, Leaf(0.1, 3), Leaf(0.2, 7), 0.17, 10), 0.6)
    assert rep.cost == 0 and rep.targeted_leaves == ()


def test_policy_strict_threshold():
    rep = policy_report(Internal(0, 0.5, Leaf(0.6, 3), Leaf(0.61, 7), 0.607, 10), 0.6, ["a"])
    assert [(t.predicate, t.samples) for t in rep.targeted_leaves] == [("a > 0.5", 7)]
    assert rep.cost == pytest.approx(0.7)


def test_policy_cost_monotone_in_c(rng):
    ds = make_dataset(rng, n=500, p=3, prob=lambda X: X[:, 0])
    tree = grow_tree(ds, _cfg(max_depth=5))
    costs = [policy_report(tree, c).cost for c in np.linspace(0, 1, 41)]
    assert all(0 <= a <= 1 for a in costs)
    assert all(a >= b for a, b in zip(costs, costs[1:]))


def test_pima_cart_root_and_policies(pima):
    cfg = TrainConfig(max_depth=3, min_leaf_fraction=0.01, threshold=0.6)
    cart = grow_tree(pima, cfg)
    assert render_tree(cart, pima.feature_names).splitlines()[0] == "if Glucose <= 127.5"
    rep = policy_report(cart, 0.6)
    assert rep.subgroups() == {(0.609, 115), (0.870, 92)}
    assert rep.cost == pytest.approx((115 + 92) / 768)
    mdfs = grow_tree(pima, TrainConfig(max_depth=3, min_leaf_fraction=0.01, threshold=0.6, method=Method.MDFS))
    assert policy_report(mdfs, 0.6).subgroups() == {(0.667, 12), (0.739, 188)}

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from lpctree.criteria import (
    NoValidSplit,
    SplitCriterion,
    candidate_thresholds,
    distance_penalty,
    final_objective,
    find_best_split_cart,
    find_final_split,
    impurity,
    weighted_risk,
)
from lpctree.data import Method, validate_dataset


@pytest.mark.parametrize(
    "values, expected",
    [([1, 2, 3, 4], [1.5, 2.5, 3.5]), ([5, 5, 5], []), ([2, 1, 1, 3], [1.5, 2.5])],
)
def test_candidate_thresholds(values, expected):
    np.testing.assert_array_equal(candidate_thresholds(values), expected)


def test_candidate_threshold_between_adjacent_floats_stays_left():
    a = 1.0
    b = np.nextafter(a, 2.0)
    (t,) = candidate_thresholds([a, b])
    assert a <= t < b


@pytest.mark.parametrize(
    "left, right, expected",
    [([0, 0], [1, 1], 0.0), ([0, 1], [0, 1], 0.25), ([0, 0, 1], [1], 1 / 6)],
)
def test_impurity_examples(left, right, expected):
    assert impurity(left, right) == pytest.approx(expected, abs=1e-15)


def test_distance_penalty_examples():
    left = [0, 0, 0, 0, 1]  # mean 0.2
    right = [1, 1, 1, 1, 0]  # mean 0.8
    assert distance_penalty(left, right, 0.6) == pytest.approx(0.7)
    assert distance_penalty([0, 0], [1, 1], 0.5) == pytest.approx(0.5)
    assert distance_penalty([0, 1], [1, 0], 0.5) == pytest.approx(1.0)


def test_weighted_risk_examples():
    assert weighted_risk([1, 1, 0], [0, 0, 1], 0.6) == pytest.approx(1.0)
    assert weighted_risk([1, 1], [0, 0], 0.5) == 0.0
    assert weighted_risk([0, 0], [1, 1], 0.5) == 0.0


def test_weighted_risk_mean_equal_c_is_not_targeted():
    # mean exactly 0.5: not targeted, so the single 1 is a miss costing (1-c)
    assert weighted_risk([0, 1], [], 0.5) == pytest.approx(0.5)


def test_find_best_split_cart_examples():
    ds = validate_dataset({"a": [1, 2, 3, 4]}, [0, 0, 1, 1])
    d = find_best_split_cart(ds)
    assert (d.feature_index, d.threshold, d.objective_value) == (0, 2.5, 0.0)
    assert (d.left_count, d.right_count) == (2, 2)

    y = [0, 1, 1, 0, 1, 0]
    ds = validate_dataset({"noise": [3, 1, 4, 1, 5, 9], "copy": y}, y)
    d = find_best_split_cart(ds)
    assert d.feature_index == 1 and d.objective_value == 0.0

    ds = validate_dataset({"a": [2, 2, 2], "b": [1, 1, 1]}, [0, 1, 0])
    with pytest.raises(NoValidSplit):
        find_best_split_cart(ds)


def test_find_best_split_cart_on_subset():
    ds = validate_dataset({"a": [1, 2, 3, 4, 5, 6]}, [1, 1, 0, 0, 1, 1])
    d = find_best_split_cart(ds, row_subset=[0, 1, 2, 3])
    assert d.threshold == 2.5 and d.left_count == 2


def test_mdfs_forces_lambda_one():
    crit = SplitCriterion(Method.MDFS, c=0.7, lam=0.2, weight_fn="quadratic")
    assert crit.lam == 1.0 and crit.weight_fn == "linear"


def test_final_split_wefs_perfect_separation():
    x = [1, 2, 3, 4, 5, 6]
    y = [1, 1, 1, 0, 0, 0]
    d = find_final_split(x, y, SplitCriterion(Method.WEFS, c=0.5))
    assert d.threshold == 3.5 and d.objective_value == 0.0


def test_final_split_pfs_lambda_zero_equals_cart(rng):
    x = rng.random(150)
    y = (rng.random(150) < x).astype(float)
    pfs = find_final_split(x, y, SplitCriterion(Method.PFS, c=0.7, lam=0.0))
    cart = find_final_split(x, y, SplitCriterion(Method.CART))
    assert pfs.threshold == cart.threshold


def test_final_split_constant_feature():
    with pytest.raises(NoValidSplit):
        find_final_split([1, 1, 1], [0, 1, 0], SplitCriterion(Method.MDFS))


def test_final_split_respects_min_leaf():
    x = np.arange(10.0)
    y = np.array([1, 0, 0, 0, 0, 0, 0, 0, 0, 0.0])
    d = find_final_split(x, y, SplitCriterion(Method.WEFS, c=0.5), min_leaf=3)
    assert d.left_count >= 3 and d.right_count >= 3


def test_mdfs_large_sample_linear_eta():
    n = 100_000
    rng = np.random.default_rng(7)
    x = np.sort(rng.random(n))
    y = (rng.random(n) < 9 * x / 11).astype(float)
    d = find_final_split(x, y, SplitCriterion(Method.MDFS, c=0.75))
    assert abs(d.threshold - 11 / 12) < 0.02


@given(
    st.lists(st.sampled_from([0.0, 1.0]), min_size=2, max_size=40),
    st.floats(0.05, 0.95),
    st.integers(1, 39),
)
@settings(max_examples=200, deadline=None)
def test_mdfs_objective_is_one_minus_distance_sum(y, c, k):
    k = min(k, len(y) - 1)
    left, right = y[:k], y[k:]
    n = len(y)
    mdfs = final_objective(left, right, SplitCriterion(Method.MDFS, c=c))
    g = len(left) / n * abs(np.mean(left) - c) + len(right) / n * abs(np.mean(right) - c)
    assert mdfs == pytest.approx(1 - g, abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=30), st.integers(1, 29), st.randoms(use_true_random=False))
@settings(max_examples=100, deadline=None)
def test_objectives_permutation_invariant_and_nonnegative(y, k, rnd):
    k = min(k, len(y) - 1)
    left, right = list(y[:k]), list(y[k:])
    before = [impurity(left, right), distance_penalty(left, right, 0.6), weighted_risk(left, right, 0.6)]
    rnd.shuffle(left)
    rnd.shuffle(right)
    after = [impurity(left, right), distance_penalty(left, right, 0.6), weighted_risk(left, right, 0.6)]
    np.testing.assert_allclose(before, after, atol=1e-12)
    assert all(v >= 0 and math.isfinite(v) for v in after)


@given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=30), st.floats(0.05, 0.95))
@settings(max_examples=100, deadline=None)
def test_weighted_risk_zero_iff_consistent(y, c):
    k = len(y) // 2
    left, right = y[:k], y[k:]
    consistent = all(
        (all(v > c for v in part) if np.mean(part) > c else all(v <= c for v in part))
        for part in (left, right)
        if part
    )
    assert (weighted_risk(left, right, c) == 0) == consistent


# -- oracle equivalence ------------------------------------------------------------

CRITERIA = [
    ("pfs", {"c": 0.6, "lam": 0.1}),
    ("pfs", {"c": 0.3, "lam": 0.5, "form": "additive"}),
    ("mdfs", {"c": 0.7}),
    ("wefs", {"c": 0.6}),
]


def _instance(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 120))
    p = int(r.integers(1, 5))
    X = np.floor(r.random((n, p)) * r.integers(2, 30)) / 7  # heavy duplicates
    y = (r.random(n) < 0.2 + 0.6 * (X[:, 0] > X[:, 0].mean())).astype(float)
    return X, y, int(r.integers(1, 6))


@pytest.mark.parametrize("seed", range(40))
def test_cart_search_matches_brute_force(seed):
    X, y, min_leaf = _instance(seed)
    expected = oracles.best_split(X.tolist(), y.tolist(), "cart", min_leaf=min_leaf)
    ds = validate_dataset(list(X.T), y)
    if expected is None:
        with pytest.raises(NoValidSplit):
            find_best_split_cart(ds, min_leaf=min_leaf)
        return
    d = find_best_split_cart(ds, min_leaf=min_leaf)
    assert (d.feature_index, d.threshold) == (expected[2], expected[1])
    assert d.objective_value == pytest.approx(expected[0], abs=1e-10)


@pytest.mark.parametrize("seed", range(40))
@pytest.mark.parametrize("kind, kw", CRITERIA)
def test_final_search_matches_brute_force(seed, kind, kw):
    X, y, min_leaf = _instance(1000 + seed)
    crit = SplitCriterion(Method.parse(kind), kw["c"], kw.get("lam", 0.1), form=kw.get("form", "convex"))
    okw = {"c": kw["c"], "lam": kw.get("lam", 0.1), "form": kw.get("form", "convex")}
    expected = oracles.best_split(X[:, :1].tolist(), y.tolist(), kind, min_leaf=min_leaf, **okw)
    if expected is None:
        with pytest.raises(NoValidSplit):
            find_final_split(X[:, 0], y, crit, min_leaf)
        return
    d = find_final_split(X[:, 0], y, crit, min_leaf)
    assert d.threshold == expected[1]
    assert d.objective_value == pytest.approx(expected[0], abs=1e-10)


@pytest.mark.parametrize("seed", range(15))
def test_final_search_with_separate_distance_responses(seed):
    r = np.random.default_rng(seed)
    n = 60
    x = np.floor(r.random(n) * 20)
    p = r.random(n)
    labels = (r.random(n) < p).astype(float)
    crit = SplitCriterion(Method.PFS, c=0.55, lam=0.3)
    expected = oracles.best_split(
        [[v] for v in x], p.tolist(), "pfs", c=0.55, lam=0.3, dist=labels.tolist(), min_leaf=2
    )
    d = find_final_split(x, p, crit, 2, dist_responses=labels)
    assert d.threshold == expected[1]
    assert d.objective_value == pytest.approx(expected[0], abs=1e-10)


@given(
    st.lists(st.sampled_from([0.0, 1.0]), min_size=2, max_size=60),
    st.floats(0.05, 0.95),
    st.integers(1, 59),
)
@settings(max_examples=200, deadline=None)
def test_weighted_risk_is_affine_in_distance_on_binary_labels(y, c, k):
    # per child: risk = min(S(1-c), (n-S)c), distance = |S(1-c) - (n-S)c|, and the sum of
    # the two arguments does not depend on the split, so wEFS and MDFS share an argmin
    k = min(k, len(y) - 1)
    left, right = y[:k], y[k:]
    n, s = len(y), sum(y)
    mdfs = final_objective(left, right, SplitCriterion(Method.MDFS, c=c))
    expected = (s * (1 - c) + (n - s) * c) / 2 - n * (1 - mdfs) / 2
    assert weighted_risk(left, right, c) == pytest.approx(expected, abs=1e-9)

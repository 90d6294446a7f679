"""Simulation grid, misclassification scoring, win rates and the real-data case studies.

The unit of work is one (DGP, replicate) pair: the sample, the forest teacher and the
CART split cache are built once and shared by every threshold, configuration and
method of that DGP. Each unit's data seed depends only on (base seed, DGP index,
replicate), so any cell can be recomputed in isolation and results do not depend on
how units are scheduled.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, DataError, Method, TrainConfig
from .dgp import DGP_INDEX, DGP_NAMES, get_dgp, sample
from .forest import ForestConfig, fit_forest, predict_proba
from .tree import PolicyReport, TreeNode, grow_tree, grow_tree_kd, policy_report, predict, render_tree

METHODS = ("CART", "PFS", "MDFS", "wEFS", "RF-CART", "RF-MDFS")
C_GRID = (0.6, 0.7, 0.8)
DEPTH_GRID = (4, 5, 6, 7)
SMOKE_DEPTHS = (4, 6)
RHO_GRID = (0.01, 0.02, 0.03)
SMOKE_REPLICATES = 5
WIN_PAIRS = (("PFS", "CART"), ("MDFS", "CART"), ("wEFS", "CART"), ("RF-MDFS", "RF-CART"))


def mr(predictions: Sequence[float], eta_true: Sequence[float], c: float) -> float:
    """Fraction of rows where the estimate and the true eta fall on opposite sides of c."""
    p = np.asarray(predictions, dtype=float)
    e = np.asarray(eta_true, dtype=float)
    if p.shape != e.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {e.size} eta values")
    if p.size == 0:
        raise ValueError("empty input")
    return float(np.count_nonzero((p - c) * (e - c) < 0) / p.size)


def _method_parts(label: str) -> tuple[bool, Method]:
    kd = label.startswith("RF-")
    return kd, Method.parse(label[3:] if kd else label)


@dataclass(frozen=True)
class ExperimentSetting:
    dgp: str
    c: float
    max_depth: int
    min_leaf_fraction: float
    n: int = 5000
    replicates: int = 50
    methods: tuple[str, ...] = METHODS
    base_seed: int = 0
    pfs_lambda: float = 0.1
    teacher_trees: int = 100
    holdout: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "dgp", get_dgp(self.dgp).name)
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {', '.join(METHODS)}")
        if self.replicates < 1 or self.n < 2:
            raise ValueError("need replicates >= 1 and n >= 2")

    @property
    def task(self) -> tuple[str, float]:
        return (self.dgp, self.c)

    @property
    def config_key(self) -> tuple[int, float]:
        return (self.max_depth, self.min_leaf_fraction)

    def train_config(self, method: Method) -> TrainConfig:
        return TrainConfig(
            max_depth=self.max_depth,
            min_leaf_fraction=self.min_leaf_fraction,
            threshold=self.c,
            method=method,
            pfs_lambda=self.pfs_lambda,
        )


def make_grid(
    dgps: Iterable[str] = DGP_NAMES,
    cs: Iterable[float] = C_GRID,
    depths: Iterable[int] = DEPTH_GRID,
    rhos: Iterable[float] = RHO_GRID,
    **common,
) -> list[ExperimentSetting]:
    return [
        ExperimentSetting(dgp, c, m, rho, **common)
        for dgp, c, m, rho in itertools.product(dgps, cs, depths, rhos)
    ]


def full_grid(**common) -> list[ExperimentSetting]:
    """24 tasks x 12 configurations = 288 settings."""
    return make_grid(**common)


def smoke_grid(**common) -> list[ExperimentSetting]:
    common.setdefault("replicates", SMOKE_REPLICATES)
    return make_grid(depths=SMOKE_DEPTHS, **common)


@dataclass(frozen=True)
class SettingResult:
    setting: ExperimentSetting
    mr: dict  # method -> tuple of per-replicate MR in percent (nan for failed replicates)
    seeds: tuple[int, ...]
    diagnostics: tuple[str, ...] = ()

    def values(self, method: str) -> np.ndarray:
        v = np.asarray(self.mr[method], dtype=float)
        return v[np.isfinite(v)]

    def mean(self, method: str) -> float:
        v = self.values(method)
        return float(v.mean()) if v.size else math.nan

    def std(self, method: str) -> float:
        """Sample standard deviation (ddof=1) over replicates."""
        v = self.values(method)
        return float(v.std(ddof=1)) if v.size > 1 else 0.0


def data_seed(base_seed: int, dgp: str, replicate: int) -> int:
    """64-bit seed for one (DGP, replicate) unit."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(DGP_INDEX[get_dgp(dgp).name], replicate))
    hi, lo = ss.generate_state(2)
    return (int(hi) << 32) | int(lo)


def _run_unit(dgp: str, replicate: int, settings: Sequence[ExperimentSetting]):
    """Score every setting of one DGP on one replicate's sample.

    Returns (seed, {setting index: {method: MR percent}}, [(setting index, message)]).
    """
    first = settings[0]
    seed = data_seed(first.base_seed, dgp, replicate)
    spec = get_dgp(dgp)
    train = sample(spec, first.n, seed).dataset
    test = sample(spec, first.n, [seed, 2]).dataset if first.holdout else train
    need_rf = any(m.startswith("RF-") for s in settings for m in s.methods)
    teacher = None
    if need_rf:
        forest = fit_forest(train, ForestConfig(n_trees=first.teacher_trees, seed=seed ^ 0x5EED))
        teacher = predict_proba(forest, train)
    caches = {False: {}, True: {}}
    out: dict[int, dict[str, float]] = {}
    diags = []
    for i, s in enumerate(settings):
        scores = {}
        for label in s.methods:
            kd, method = _method_parts(label)
            try:
                cfg = s.train_config(method)
                if kd:
                    tree = grow_tree_kd(train, teacher, cfg, cache=caches[True])
                else:
                    tree = grow_tree(train, cfg, cache=caches[False])
                scores[label] = 100.0 * mr(predict(tree, test), test.eta, s.c)
            except (DataError, ValueError, ArithmeticError) as exc:
                scores[label] = math.nan
                msg = f"{dgp} rep={replicate} c={s.c} depth={s.max_depth} rho={s.min_leaf_fraction} {label}: {exc}"
                diags.append((i, msg))
        out[i] = scores
    return seed, out, diags


def _unit_task(args):
    return _run_unit(*args)


def _units(settings: Sequence[ExperimentSetting]):
    """Group settings into (dgp, replicate) units; settings sharing a unit must agree on data knobs."""
    by_data = defaultdict(list)
    for idx, s in enumerate(settings):
        by_data[(s.dgp, s.n, s.base_seed, s.holdout, s.teacher_trees)].append(idx)
    units = []
    for (dgp, *_), idxs in by_data.items():
        reps = max(settings[i].replicates for i in idxs)
        for r in range(reps):
            active = [i for i in idxs if settings[i].replicates > r]
            units.append((dgp, r, active))
    return units


def run_suite_results(settings: Sequence[ExperimentSetting], jobs: int = 1, progress=None) -> list[SettingResult]:
    settings = list(settings)
    units = _units(settings)
    tasks = [(dgp, r, [settings[i] for i in active]) for dgp, r, active in units]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_unit_task, tasks, chunksize=1))
    else:
        results = []
        for k, t in enumerate(tasks):
            results.append(_unit_task(t))
            if progress is not None:
                progress(k + 1, len(tasks))
    per_setting = [defaultdict(dict) for _ in settings]
    seeds = [dict() for _ in settings]
    diags = [[] for _ in settings]
    for (dgp, r, active), (seed, scores, unit_diags) in zip(units, results):
        for local, idx in enumerate(active):
            seeds[idx][r] = seed
            for label, v in scores[local].items():
                per_setting[idx][label][r] = v
        for local, msg in unit_diags:
            diags[active[local]].append(msg)
    out = []
    for idx, s in enumerate(settings):
        reps = range(s.replicates)
        mrs = {m: tuple(per_setting[idx][m][r] for r in reps) for m in s.methods}
        out.append(SettingResult(s, mrs, tuple(seeds[idx][r] for r in reps), tuple(diags[idx])))
    return out


def run_setting(setting: ExperimentSetting, jobs: int = 1) -> SettingResult:
    return run_suite_results([setting], jobs)[0]


# -- aggregation -------------------------------------------------------------------


@dataclass(frozen=True)
class TableRow:
    dgp: str
    c: float
    config: dict  # method -> (max_depth, min_leaf_fraction)
    mean: dict  # method -> percent
    std: dict


@dataclass(frozen=True)
class SuiteReport:
    results: tuple[SettingResult, ...]
    win_rates: dict = field(default_factory=dict)  # (method, baseline) -> fraction
    table_joint: tuple[TableRow, ...] = ()
    table_per_method: tuple[TableRow, ...] = ()

    @property
    def methods(self) -> tuple[str, ...]:
        seen = []
        for r in self.results:
            for m in r.setting.methods:
                if m not in seen:
                    seen.append(m)
        return tuple(m for m in METHODS if m in seen)

    @property
    def diagnostics(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(d for r in self.results for d in r.diagnostics))


def win_rate(results: Sequence[SettingResult], method: str, baseline: str) -> float:
    """Share of settings where ``method`` has strictly lower mean MR than ``baseline``."""
    pairs = [
        (r.mean(method), r.mean(baseline))
        for r in results
        if method in r.mr and baseline in r.mr
    ]
    pairs = [(a, b) for a, b in pairs if not (math.isnan(a) or math.isnan(b))]
    if not pairs:
        return math.nan
    return sum(a < b for a, b in pairs) / len(pairs)


def best_config_table(results: Sequence[SettingResult], per_method: bool = False) -> list[TableRow]:
    """One row per (DGP, c) task at the best of its configurations.

    The joint table picks the configuration minimising CART's mean MR (or the first
    method present when CART was not run) and reports every method there; the
    per-method table lets each method pick its own best configuration.
    """
    tasks: dict = defaultdict(list)
    for r in results:
        tasks[r.setting.task].append(r)
    order = {name: i for i, name in enumerate(DGP_NAMES)}
    rows = []
    for (dgp, c) in sorted(tasks, key=lambda t: (order.get(t[0], 99), -t[1])):
        cell = tasks[(dgp, c)]
        methods = [m for m in METHODS if all(m in r.mr for r in cell)]
        config, mean, std = {}, {}, {}
        pivot = "CART" if "CART" in methods else methods[0]
        for m in methods:
            key = m if per_method else pivot
            best = min(cell, key=lambda r: (np.nan_to_num(r.mean(key), nan=np.inf), r.setting.config_key))
            config[m] = best.setting.config_key
            mean[m] = best.mean(m)
            std[m] = best.std(m)
        rows.append(TableRow(dgp, c, config, mean, std))
    return rows


def summarize(results: Sequence[SettingResult]) -> SuiteReport:
    results = tuple(results)
    rates = {}
    for a, b in WIN_PAIRS:
        rate = win_rate(results, a, b)
        if not math.isnan(rate):
            rates[(a, b)] = rate
    return SuiteReport(
        results,
        rates,
        tuple(best_config_table(results)),
        tuple(best_config_table(results, per_method=True)),
    )


def run_suite(settings: Sequence[ExperimentSetting], jobs: int = 1, progress=None) -> SuiteReport:
    return summarize(run_suite_results(settings, jobs, progress))


# -- case studies ------------------------------------------------------------------

CASE_METHODS = ("CART", "MDFS", "RF-CART", "RF-MDFS")


@dataclass(frozen=True)
class CaseStudyResult:
    name: str
    c: float
    depth: int
    feature_names: tuple[str, ...]
    trees: dict  # method -> TreeNode
    policies: dict  # method -> PolicyReport

    def text(self, method: str) -> str:
        return render_tree(self.trees[method], self.feature_names)


def run_case_study(
    name: str,
    dataset: Dataset,
    c: float,
    depth: int = 3,
    min_leaf_fraction: float = 0.01,
    teacher_trees: int = 100,
    seed: int = 0,
    methods: Sequence[str] = CASE_METHODS,
) -> CaseStudyResult:
    """Fit the case-study methods on one dataset and extract targeted-leaf policies."""
    base = TrainConfig(max_depth=depth, min_leaf_fraction=min_leaf_fraction, threshold=c)
    teacher = None
    if any(m.startswith("RF-") for m in methods):
        forest = fit_forest(dataset, ForestConfig(n_trees=teacher_trees, seed=seed))
        teacher = predict_proba(forest, dataset)
    trees: dict[str, TreeNode] = {}
    policies: dict[str, PolicyReport] = {}
    caches = {False: {}, True: {}}
    for label in methods:
        kd, method = _method_parts(label)
        cfg = replace(base, method=method)
        tree = grow_tree_kd(dataset, teacher, cfg, caches[True]) if kd else grow_tree(dataset, cfg, caches[False])
        trees[label] = tree
        policies[label] = policy_report(tree, c, dataset.feature_names)
    return CaseStudyResult(name, c, depth, dataset.feature_names, trees, policies)

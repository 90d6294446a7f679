"""Population-level split objectives for one univariate feature on [0, 1].

Given a latent probability ``eta(x)`` and feature density ``f`` this module computes
child means, the latent-probability misclassification risk of a single split, the
CART / PFS / distance objectives and their optimisers, and the finite-sample
distance-split estimator together with a Monte-Carlo consistency harness.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .criteria import WEIGHTS

SIMPSON_PANELS = 10_000
GRID_POINTS = 100_000
TABLE_POINTS = 1_000_000
ROOT_XTOL = 1e-12

Curve = Callable[[np.ndarray], np.ndarray]


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EtaModel:
    """Latent probability curve on [0, 1]; ``density=None`` means uniform X.

    ``breakpoints`` lists interior points where ``eta`` or the density is not smooth;
    quadrature never straddles them.
    """

    name: str
    eta: Curve
    density: Optional[Curve] = None
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.density is not None:
            total = sum(simpson(self.density, a, b) for a, b in _pieces(self, 0.0, 1.0))
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"density of {self.name!r} integrates to {total:.8f}, not 1")

    @property
    def uniform(self) -> bool:
        return self.density is None

    def f(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.density is None:
            return np.ones_like(x)
        return self.density(x)

    def __call__(self, x):
        return self.eta(np.asarray(x, dtype=float))


# -- shipped models ----------------------------------------------------------------


def _sine(x):
    return (np.sin(2 * np.pi * x) + 1) / 2


def _capped_sine(x):
    return np.where(x <= 0.25, 1.0, np.where(x >= 0.75, 0.0, _sine(x)))


def _linear(x):
    return 9 * x / 11


STEP_AT = 0.4
STEP_HALF_WIDTH = 0.01


def _step(x):
    # continuous ramp from 1 down to 0 across STEP_AT +- STEP_HALF_WIDTH
    return np.clip(0.5 - (x - STEP_AT) / (2 * STEP_HALF_WIDTH), 0.0, 1.0)


def _double_crossing(x):
    return 0.1 + 0.8 * np.exp(-(((x - 0.5) / 0.15) ** 2))


MODELS: dict[str, EtaModel] = {
    "sine": EtaModel("sine", _sine),
    "capped_sine": EtaModel("capped_sine", _capped_sine, breakpoints=(0.25, 0.75)),
    "linear": EtaModel("linear", _linear),
    "step": EtaModel(
        "step", _step, breakpoints=(STEP_AT - STEP_HALF_WIDTH, STEP_AT + STEP_HALF_WIDTH)
    ),
    "double_crossing": EtaModel("double_crossing", _double_crossing),
}


def get_model(name: str) -> EtaModel:
    try:
        return MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose one of {', '.join(MODELS)}") from None


# -- quadrature --------------------------------------------------------------------


def simpson(g: Curve, a: float, b: float, panels: int = SIMPSON_PANELS) -> float:
    """Composite Simpson rule with an even number of uniform panels."""
    if b <= a:
        return 0.0
    panels += panels % 2
    x = np.linspace(a, b, panels + 1)
    y = g(x)
    h = (b - a) / panels
    return float(h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum()))


def _pieces(model: EtaModel, a: float, b: float, extra: Sequence[float] = ()) -> list[tuple[float, float]]:
    cuts = sorted({a, b, *(t for t in (*model.breakpoints, *extra) if a < t < b)})
    return list(zip(cuts[:-1], cuts[1:]))


def integrate(model: EtaModel, g: Curve, a: float, b: float) -> float:
    return sum(simpson(g, lo, hi) for lo, hi in _pieces(model, a, b))


def mass(model: EtaModel, a: float, b: float) -> float:
    """Probability that X falls in [a, b]."""
    if model.uniform:
        return max(0.0, b - a)
    return integrate(model, model.f, a, b)


def _check_s(s: float) -> None:
    if not 0 < s < 1:
        raise ValueError(f"split point must lie in (0,1), got {s}")


def node_means(model: EtaModel, s: float) -> tuple[float, float]:
    """Conditional means of eta left (x <= s) and right (x > s) of the split."""
    _check_s(s)
    ef = lambda x: model.eta(x) * model.f(x)  # noqa: E731
    left = integrate(model, ef, 0.0, s) / mass(model, 0.0, s)
    right = integrate(model, ef, s, 1.0) / mass(model, s, 1.0)
    return left, right


def crossings(model: EtaModel, c: float, grid: int = 200_000) -> np.ndarray:
    """Points where ``eta > c`` switches truth value, located by bisection."""
    x = np.unique(np.concatenate([np.linspace(0.0, 1.0, grid + 1), model.breakpoints]))
    above = model.eta(x) > c
    out = []
    for i in np.flatnonzero(above[1:] != above[:-1]):
        lo, hi = x[i], x[i + 1]
        lo_above = above[i]
        while hi - lo > ROOT_XTOL:
            mid = 0.5 * (lo + hi)
            if (model.eta(np.array([mid]))[0] > c) == lo_above:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    return np.array(out)


def _above_intervals(model: EtaModel, c: float) -> list[tuple[float, float]]:
    """Maximal intervals of [0, 1] on which eta > c."""
    cuts = [0.0, *crossings(model, c), 1.0]
    out = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi > lo and model.eta(np.array([0.5 * (lo + hi)]))[0] > c:
            out.append((lo, hi))
    return out


def risk(model: EtaModel, c: float, s: float) -> float:
    """Mass of x classified on the wrong side of ``c`` by the split at ``s``.

    Each child is targeted when its mean exceeds ``c``; a point is misclassified when
    its own eta sits on the other side. Points with eta exactly ``c`` count as below.
    """
    _check_s(s)
    mu_l, mu_r = node_means(model, s)
    above = _above_intervals(model, c)
    total = 0.0
    for lo, hi, target in ((0.0, s, mu_l > c), (s, 1.0, mu_r > c)):
        above_mass = sum(mass(model, max(lo, a), min(hi, b)) for a, b in above if min(hi, b) > max(lo, a))
        total += mass(model, lo, hi) - above_mass if target else above_mass
    return float(total)


def midpoint_residual(model: EtaModel, s: float) -> float:
    """|2 eta(s) - mu_L(s) - mu_R(s)|, zero at every stationary point of the CART objective."""
    mu_l, mu_r = node_means(model, s)
    return abs(2 * float(model.eta(np.array([s]))[0]) - mu_l - mu_r)


# -- objectives --------------------------------------------------------------------


def _objectives(F, mu_l, mu_r, c, lam, W):
    g_cart = F * (mu_l - mu_l**2) + (1 - F) * (mu_r - mu_r**2)
    pen = F * W(np.abs(mu_l - c)) + (1 - F) * W(np.abs(mu_r - c))
    g_star = F * np.abs(mu_l - c) + (1 - F) * np.abs(mu_r - c)
    return g_cart, g_cart + lam * pen, g_star


@dataclass(frozen=True)
class SplitEvaluation:
    s: float
    mu_L: float
    mu_R: float
    risk: float
    g_cart: float
    g_pfs: float
    g_star: float


def evaluate_split(model: EtaModel, c: float, s: float, lam: float = 0.1, weight_fn: str = "linear") -> SplitEvaluation:
    mu_l, mu_r = node_means(model, s)
    F = mass(model, 0.0, s)
    g_cart, g_pfs, g_star = _objectives(F, mu_l, mu_r, c, lam, WEIGHTS[weight_fn])
    return SplitEvaluation(s, mu_l, mu_r, risk(model, c, s), float(g_cart), float(g_pfs), float(g_star))


@dataclass(frozen=True)
class _Tables:
    x: np.ndarray
    F: np.ndarray
    M: np.ndarray


@lru_cache(maxsize=32)
def _tables(model: EtaModel) -> _Tables:
    """Cumulative F and int(eta f) on a fine grid (trapezoid, h = 1e-6)."""
    x = np.unique(np.concatenate([np.linspace(0.0, 1.0, TABLE_POINTS + 1), model.breakpoints]))
    f = model.f(x)
    ef = model.eta(x) * f
    dx = np.diff(x)
    F = np.concatenate([[0.0], np.cumsum(dx * (f[1:] + f[:-1]) / 2)])
    M = np.concatenate([[0.0], np.cumsum(dx * (ef[1:] + ef[:-1]) / 2)])
    return _Tables(x, F, M)


def _grid_state(model: EtaModel, s: np.ndarray):
    t = _tables(model)
    F = np.interp(s, t.x, t.F)
    M = np.interp(s, t.x, t.M)
    Ftot, Mtot = t.F[-1], t.M[-1]
    mu_l = M / F
    mu_r = (Mtot - M) / (Ftot - F)
    return F / Ftot, mu_l, mu_r


def _risk_grid(model: EtaModel, c: float, s: np.ndarray, F, mu_l, mu_r) -> np.ndarray:
    t = _tables(model)
    Fs = lambda z: np.interp(z, t.x, t.F) / t.F[-1]  # noqa: E731
    left_above = np.zeros_like(s)
    total_above = 0.0
    for a, b in _above_intervals(model, c):
        left_above += np.clip(Fs(np.minimum(s, b)) - Fs(a), 0.0, None)
        total_above += Fs(b) - Fs(a)
    right_above = total_above - left_above
    left = np.where(mu_l > c, F - left_above, left_above)
    right = np.where(mu_r > c, (1 - F) - right_above, right_above)
    return left + right


def evaluate_grid(
    model: EtaModel, c: float, s: Sequence[float], lam: float = 0.1, weight_fn: str = "linear"
) -> list[SplitEvaluation]:
    """Vectorised :func:`evaluate_split` over many split points."""
    s = np.asarray(s, dtype=float)
    if np.any((s <= 0) | (s >= 1)):
        raise ValueError("split points must lie in (0,1)")
    F, mu_l, mu_r = _grid_state(model, s)
    g_cart, g_pfs, g_star = _objectives(F, mu_l, mu_r, c, lam, WEIGHTS[weight_fn])
    r = _risk_grid(model, c, s, F, mu_l, mu_r)
    return [
        SplitEvaluation(*map(float, row))
        for row in zip(s, mu_l, mu_r, r, g_cart, g_pfs, g_star)
    ]


# -- optimisers --------------------------------------------------------------------


def golden_section(fun: Callable[[float], float], a: float, b: float, xtol: float = 1e-10) -> float:
    """Minimiser of a unimodal ``fun`` on [a, b]."""
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def _grid_then_polish(grid_obj: Callable, exact_obj: Callable, n_grid: int = GRID_POINTS) -> float:
    s = np.arange(1, n_grid) / n_grid
    vals = grid_obj(s)
    if not np.all(np.isfinite(vals)) or np.ptp(vals) < 1e-14:
        raise OptimizationError("objective is flat or undefined on the search grid")
    k = int(np.argmin(vals))
    lo = s[k - 1] if k > 0 else s[0] / 2
    hi = s[k + 1] if k + 1 < s.size else (s[-1] + 1) / 2
    x = golden_section(exact_obj, lo, hi)
    # never return something worse than the best grid point
    return x if exact_obj(x) <= exact_obj(float(s[k])) else float(s[k])


def _exact(model: EtaModel, c: float, lam: float, weight_fn: str, which: int) -> Callable[[float], float]:
    W = WEIGHTS[weight_fn]

    def fun(s: float) -> float:
        mu_l, mu_r = node_means(model, s)
        vals = _objectives(mass(model, 0.0, s), mu_l, mu_r, c, lam, W)
        return float(vals[which])

    return fun


def _gridded(model: EtaModel, c: float, lam: float, weight_fn: str, which: int):
    W = WEIGHTS[weight_fn]

    def fun(s: np.ndarray) -> np.ndarray:
        F, mu_l, mu_r = _grid_state(model, s)
        return _objectives(F, mu_l, mu_r, c, lam, W)[which]

    return fun


def cart_split(model: EtaModel) -> float:
    """Global minimiser of the weighted child variance."""
    return _grid_then_polish(_gridded(model, 0.5, 0.0, "linear", 0), _exact(model, 0.5, 0.0, "linear", 0))


def pfs_split(model: EtaModel, c: float, lam: float = 0.1, weight_fn: str = "linear") -> float:
    """Global minimiser of CART objective + lam * distance penalty."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return _grid_then_polish(_gridded(model, c, lam, weight_fn, 1), _exact(model, c, lam, weight_fn, 1))


def mdfs_split(model: EtaModel, c: float) -> float:
    """Global maximiser of F(s)|mu_L - c| + (1 - F(s))|mu_R - c| (uniform X only)."""
    if not model.uniform:
        raise ValueError("the distance split is only identified under a uniform feature")
    grid = _gridded(model, c, 0.0, "linear", 2)
    exact = _exact(model, c, 0.0, "linear", 2)
    return _grid_then_polish(lambda s: -grid(s), lambda s: -exact(s))


def optimal_split(model: EtaModel, c: float) -> Optional[float]:
    """The unique crossing of eta and c, or None when it is not unique."""
    roots = crossings(model, c)
    return float(roots[0]) if roots.size == 1 else None


def dominates(model: EtaModel, c: float, s: float, s_prime: float, grid: int = 100_000) -> bool:
    """Whether splitting at ``s_prime`` strictly dominates splitting at ``s``.

    Checked on a midpoint grid: every x classified correctly under ``s`` must stay
    correct under ``s_prime`` and at least one grid cell must be fixed.
    """
    x = (np.arange(grid) + 0.5) / grid
    truth = model.eta(x) > c

    def correct(split: float) -> np.ndarray:
        mu_l, mu_r = node_means(model, split)
        targeted = np.where(x <= split, mu_l > c, mu_r > c)
        return targeted == truth

    before, after = correct(s), correct(s_prime)
    return bool(np.all(after[before]) and np.any(after & ~before))


# -- finite-sample estimator -------------------------------------------------------


def mdfs_estimate(x_sample: Sequence[float], y_sample: Sequence[float], c: float, epsilon: float = 0.05) -> float:
    """Maximiser over midpoints in (eps, 1-eps) of s|ybar_L - c| + (1-s)|ybar_R - c|.

    The weights are the split location itself (uniform X), not the child fractions.
    """
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    x = np.asarray(x_sample, dtype=float)
    y = np.asarray(y_sample, dtype=float)
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    n = x.size
    k = np.flatnonzero(x[1:] > x[:-1]) + 1
    s = (x[k - 1] + x[k]) / 2
    keep = (s > epsilon) & (s < 1 - epsilon)
    k, s = k[keep], s[keep]
    if k.size == 0:
        raise ValueError("no candidate split inside (epsilon, 1 - epsilon)")
    cum = np.cumsum(y)
    mean_l = cum[k - 1] / k
    mean_r = (cum[-1] - cum[k - 1]) / (n - k)
    g = s * np.abs(mean_l - c) + (1 - s) * np.abs(mean_r - c)
    best = g.max()
    return float(s[np.flatnonzero(g >= best - 1e-12 * max(1.0, best))[0]])


@dataclass(frozen=True)
class ConsistencyConfig:
    epsilon: float = 0.05
    n_grid: tuple[int, ...] = (1_000, 10_000, 100_000)
    replicates: int = 50
    seed: int = 0


@dataclass(frozen=True)
class ConsistencyRow:
    n: int
    median_abs_error: float
    median_risk: float
    abs_errors: tuple[float, ...] = field(repr=False, default=())
    risks: tuple[float, ...] = field(repr=False, default=())


def _replicate(model: EtaModel, c: float, eps: float, n: int, seed_seq: np.random.SeedSequence, s_star):
    rng = np.random.default_rng(seed_seq)
    x = rng.random(n)
    y = (rng.random(n) < model.eta(x)).astype(float)
    s_hat = mdfs_estimate(x, y, c, eps)
    err = abs(s_hat - s_star) if s_star is not None else math.nan
    return err, risk(model, c, s_hat)


def consistency_experiment(
    model: EtaModel, c: float, config: ConsistencyConfig = ConsistencyConfig(), jobs: int = 1
) -> list[ConsistencyRow]:
    """Median |s_hat - s*| and median risk of the estimator for each sample size.

    Replicate r at sample size index i draws from SeedSequence(seed, spawn_key=(i, r)),
    so results do not depend on scheduling.
    """
    s_star = optimal_split(model, c)
    tasks = [
        (n, np.random.SeedSequence(config.seed, spawn_key=(i, r)))
        for i, n in enumerate(config.n_grid)
        for r in range(config.replicates)
    ]

    def run(task):
        n, ss = task
        return _replicate(model, c, config.epsilon, n, ss, s_star)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    rows = []
    for i, n in enumerate(config.n_grid):
        chunk = results[i * config.replicates : (i + 1) * config.replicates]
        errs = tuple(e for e, _ in chunk)
        risks = tuple(r for _, r in chunk)
        med_err = float(np.median(errs)) if s_star is not None else math.nan
        rows.append(ConsistencyRow(n, med_err, float(np.median(risks)), errs, risks))
    return rows


def is_monotone(rows: Sequence[ConsistencyRow]) -> bool:
    errs = [r.median_abs_error for r in rows]
    risks = [r.median_risk for r in rows]
    return all(b <= a for a, b in zip(errs, errs[1:])) and all(b <= a for a, b in zip(risks, risks[1:]))

"""Synthetic data generation processes with a known latent probability per row.

Features are i.i.d. U(0,1); ``eta = sigmoid(f(X) - E f(X))`` and ``y ~ Bernoulli(eta)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from .data import Dataset, validate_dataset

CENTER_MC_N = 1_000_000
CENTER_SEED = 20_240_517  # reserved stream, never used for sampling


def _ball(X):
    return X[:, 0] ** 2 + X[:, 1] ** 2 + X[:, 2] ** 2


def _friedman1(X):
    return (
        10 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20 * (X[:, 2] - 0.5) ** 2
        + 10 * X[:, 3]
        + 5 * X[:, 4]
    )


def _friedman_z(X):
    z1 = 100 * X[:, 0]
    z2 = 40 * np.pi + 520 * np.pi * X[:, 1]
    z4 = 10 * X[:, 3] + 1
    return z1, z2 * X[:, 2] - 1 / (z2 * z4)


def _friedman2(X):
    z1, inner = _friedman_z(X)
    return np.sqrt(z1**2 + inner**2)


def _friedman3(X):
    z1, inner = _friedman_z(X)
    # arctan2 keeps X1 = 0 finite; it equals arctan(inner / z1) for z1 > 0
    return np.arctan2(inner, z1)


def _poly1(X):
    return 4 * X[:, 0] + 3 * X[:, 1] ** 2 + 2 * X[:, 2] ** 3 + X[:, 3] ** 4


def _poly2(X):
    # the linear term uses X1, not X4 (see POLY2_X4)
    return X[:, 0] ** 4 + 2 * X[:, 1] ** 3 + 3 * X[:, 2] ** 2 + 4 * X[:, 0]


def _poly2_x4(X):
    return X[:, 0] ** 4 + 2 * X[:, 1] ** 3 + 3 * X[:, 2] ** 2 + 4 * X[:, 3]


def _ring(X):
    return np.abs(_ball(X) - 1)


def _collinear(X):
    return X[:, :6].sum(axis=1)


def _step(X):
    return (X[:, 0] <= 0.5).astype(float)


@dataclass(frozen=True)
class DgpSpec:
    """One synthetic process.

    ``link="sigmoid"`` maps the centred ``f`` through a sigmoid; ``link="identity"``
    treats ``f`` as eta itself (used for noiseless test processes).
    """

    name: str
    n_features: int
    f: Callable[[np.ndarray], np.ndarray]
    collinear: bool = False
    link: str = "sigmoid"

    def features(self, rng: np.random.Generator, n: int) -> np.ndarray:
        X = rng.random((n, self.n_features))
        if self.collinear:
            X[:, 3:6] = X[:, 0:3] + 0.1 * rng.standard_normal((n, 3))
        return X

    def eta(self, X: np.ndarray) -> np.ndarray:
        fx = self.f(X)
        if self.link == "identity":
            return np.clip(fx, 0.0, 1.0)
        return sigmoid(fx - center_constant(self))


DGPS: dict[str, DgpSpec] = {
    s.name: s
    for s in (
        DgpSpec("Ball", 5, _ball),
        DgpSpec("Friedman1", 5, _friedman1),
        DgpSpec("Friedman2", 5, _friedman2),
        DgpSpec("Friedman3", 5, _friedman3),
        DgpSpec("Poly1", 5, _poly1),
        DgpSpec("Poly2", 5, _poly2),
        DgpSpec("Ring", 5, _ring),
        DgpSpec("Collinear", 6, _collinear, collinear=True),
    )
}
DGP_NAMES = tuple(DGPS)

# Alternative reading of Poly2 with 4*X4; not part of the default grid.
POLY2_X4 = DgpSpec("Poly2X4", 5, _poly2_x4)
# Noiseless step on X1 (eta is 0 or 1); for sanity checks only.
STEP = DgpSpec("Step", 5, _step, link="identity")

_EXTRA = {s.name: s for s in (POLY2_X4, STEP)}
# stable position of every process, used to derive per-process seed streams
DGP_INDEX = {name: i for i, name in enumerate((*DGPS, *_EXTRA))}


def get_dgp(name: str) -> DgpSpec:
    for table in (DGPS, _EXTRA):
        for key, spec in table.items():
            if key.lower() == name.lower():
                return spec
    raise ValueError(f"unknown DGP {name!r}; choose one of {', '.join(DGP_NAMES)}")


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep eta strictly inside (0, 1) even where the float sigmoid saturates
    return np.clip(out, np.finfo(float).tiny, np.nextafter(1.0, 0.0))


@lru_cache(maxsize=None)
def _center(spec: DgpSpec, mc_n: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    total = 0.0
    chunk = 200_000
    done = 0
    while done < mc_n:
        m = min(chunk, mc_n - done)
        total += float(spec.f(spec.features(rng, m)).sum())
        done += m
    return total / mc_n


def center_constant(spec: DgpSpec, mc_n: int = CENTER_MC_N, seed: int = CENTER_SEED) -> float:
    """Monte-Carlo estimate of E f(X), cached per (spec, mc_n, seed)."""
    if mc_n < 100_000:
        raise ValueError("mc_n must be >= 1e5")
    return _center(spec, mc_n, seed)


@dataclass(frozen=True)
class SyntheticSample:
    dataset: Dataset
    dgp: DgpSpec
    seed: object


def sample(spec: DgpSpec, n: int, seed) -> SyntheticSample:
    """Draw ``n`` rows. ``seed`` is anything ``np.random.default_rng`` accepts."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = spec.features(rng, n)
    eta = spec.eta(X)
    y = (rng.random(n) < eta).astype(float)
    names = [f"x{j + 1}" for j in range(spec.n_features)]
    ds = validate_dataset(dict(zip(names, X.T)), y, eta_true=eta, binary=True)
    return SyntheticSample(ds, spec, seed)


def write_sample_csv(s: SyntheticSample, path) -> Path:
    """Dump features, eta and y as CSV (columns x1..xp, eta, y)."""
    path = Path(path)
    ds = s.dataset
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, "eta", "y"])
        for row, e, y in zip(ds.X, ds.eta, ds.y):
            w.writerow([*(repr(float(v)) for v in row), repr(float(e)), int(y)])
    return path

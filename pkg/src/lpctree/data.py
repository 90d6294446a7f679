"""Tabular data model, node statistics and training configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Mapping, Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised when input columns violate the dataset contract."""


class EmptyDataset(DataError):
    pass


class Method(str, Enum):
    CART = "cart"
    PFS = "pfs"
    MDFS = "mdfs"
    WEFS = "wefs"

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        if isinstance(value, Method):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown method {value!r}; choose one of {choices}") from None


WEIGHT_FUNCTIONS = ("linear", "quadratic", "exponential")
PFS_FORMS = ("convex", "additive")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated, immutable table.

    ``X`` is stored column-major (Fortran order) with shape ``(n_rows, n_features)``
    so that per-feature scans touch contiguous memory.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    eta: Optional[np.ndarray] = None
    binary: bool = True

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    @cached_property
    def sort_order(self) -> np.ndarray:
        """Stable ascending row permutation per feature, shape ``(n_features, n_rows)``."""
        order = np.empty((self.n_features, self.n_rows), dtype=np.int64)
        for j in range(self.n_features):
            order[j] = np.argsort(self.X[:, j], kind="stable")
        order.flags.writeable = False
        return order

    def with_response(self, y: Sequence[float], binary: bool = False) -> "Dataset":
        return validate_dataset(
            dict(zip(self.feature_names, self.X.T)), y, eta_true=self.eta, binary=binary
        )

    def subset(self, rows: np.ndarray) -> "Dataset":
        eta = None if self.eta is None else self.eta[rows]
        return validate_dataset(
            dict(zip(self.feature_names, self.X[rows].T)), self.y[rows], eta, binary=self.binary
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def validate_dataset(
    raw_columns: Mapping[str, Sequence[float]] | Sequence[Sequence[float]],
    response: Sequence[float],
    eta_true: Optional[Sequence[float]] = None,
    binary: Optional[bool] = None,
) -> Dataset:
    """Check and freeze raw columns into a :class:`Dataset`.

    ``raw_columns`` is either a name -> values mapping or a plain sequence of columns
    (named ``x1..xp``). ``binary=None`` infers binary mode from the response values.
    """
    if isinstance(raw_columns, Mapping):
        names = tuple(str(k) for k in raw_columns)
        cols = [np.asarray(v, dtype=float) for v in raw_columns.values()]
    else:
        cols = [np.asarray(v, dtype=float) for v in raw_columns]
        names = tuple(f"x{j + 1}" for j in range(len(cols)))
    if not cols:
        raise EmptyDataset("no feature columns")
    n = len(cols[0])
    if n == 0:
        raise EmptyDataset("dataset has no rows")
    for name, col in zip(names, cols):
        if col.ndim != 1 or len(col) != n:
            raise DataError(f"length mismatch: column {name!r} has {len(col)} rows, expected {n}")
        if not np.all(np.isfinite(col)):
            raise DataError(f"non-finite value in column {name!r}")
    y = np.asarray(response, dtype=float)
    if y.ndim != 1 or len(y) != n:
        raise DataError(f"length mismatch: response has {len(y)} rows, expected {n}")
    if not np.all(np.isfinite(y)):
        raise DataError("non-finite value in response")
    if np.any((y < 0) | (y > 1)):
        raise DataError("response outside [0,1]")
    is_binary = bool(np.all((y == 0) | (y == 1)))
    if binary is None:
        binary = is_binary
    elif binary and not is_binary:
        raise DataError("binary mode requires every response to be exactly 0 or 1")
    eta = None
    if eta_true is not None:
        eta = np.asarray(eta_true, dtype=float)
        if eta.ndim != 1 or len(eta) != n:
            raise DataError(f"length mismatch: eta_true has {len(eta)} rows, expected {n}")
        if not np.all(np.isfinite(eta)) or np.any((eta < 0) | (eta > 1)):
            raise DataError("eta_true outside [0,1]")
        eta = _readonly(eta.copy())
    X = np.asfortranarray(np.column_stack(cols))
    return Dataset(_readonly(X), _readonly(y.copy()), names, eta, binary)


@dataclass(frozen=True)
class NodeStats:
    count: int
    mean: float
    variance: float


def node_stats(responses: Sequence[float]) -> NodeStats:
    """Count, mean and population variance (divide by count)."""
    y = np.asarray(responses, dtype=float)
    if y.size == 0:
        return NodeStats(0, 0.0, 0.0)
    mean = float(y.mean())
    var = float(np.mean((y - mean) ** 2)) if y.size > 1 else 0.0
    return NodeStats(int(y.size), mean, var)


@dataclass(frozen=True)
class TrainConfig:
    """Tree-growing configuration.

    ``pfs_form`` selects how the PFS penalty is combined with the impurity: ``convex``
    minimises ``(1-lam)*impurity + lam*penalty`` (lam=1 is exactly MDFS), ``additive``
    minimises ``impurity + lam*penalty``.

    ``kd_labels_for_distance`` controls the distilled grower: when true the PFS/MDFS
    final split is scored on the observed labels while wEFS, CART splits and leaf
    values use the teacher probabilities; when false everything uses the teacher.
    """

    max_depth: int = 4
    min_leaf_fraction: float = 0.01
    threshold: float = 0.5
    method: Method = Method.CART
    pfs_lambda: float = 0.1
    weight_fn: str = "linear"
    pfs_form: str = "convex"
    kd_labels_for_distance: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method.parse(self.method))
        if not 1 <= self.max_depth <= 32:
            raise ValueError(f"max_depth must be in [1, 32], got {self.max_depth}")
        if not 0 < self.min_leaf_fraction < 1:
            raise ValueError(f"min_leaf_fraction must be in (0,1), got {self.min_leaf_fraction}")
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold c must be in (0,1), got {self.threshold}")
        if not 0 <= self.pfs_lambda <= 1:
            raise ValueError(f"pfs_lambda must be in [0,1], got {self.pfs_lambda}")
        if self.weight_fn not in WEIGHT_FUNCTIONS:
            raise ValueError(f"weight_fn must be one of {WEIGHT_FUNCTIONS}")
        if self.pfs_form not in PFS_FORMS:
            raise ValueError(f"pfs_form must be one of {PFS_FORMS}")

    def min_leaf(self, n: int) -> int:
        return max(1, math.ceil(self.min_leaf_fraction * n - 1e-9))

    @property
    def effective_lambda(self) -> float:
        if self.method is Method.MDFS:
            return 1.0
        if self.method is Method.CART:
            return 0.0
        return self.pfs_lambda

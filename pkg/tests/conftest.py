from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from lpctree.data import validate_dataset
from lpctree.io import load_pima

DATA_DIR = Path(__file__).parent / "data"
PIMA_CSV = DATA_DIR / "pima.csv"


@pytest.fixture(scope="session")
def pima():
    return load_pima(PIMA_CSV)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(rng, n=200, p=3, levels=None, prob=None):
    """Random binary dataset; ``levels`` rounds features to create duplicate values."""
    X = rng.random((n, p))
    if levels:
        X = np.floor(X * levels) / levels
    eta = prob(X) if prob else 0.2 + 0.6 * (X[:, 0] > 0.5)
    y = (rng.random(n) < eta).astype(float)
    return validate_dataset(list(X.T), y)


# Acceptance lines recorded by tests/test_acceptance.py as (sort key, text), echoed
# after the run so they appear in plain `pytest -v` output without needing `-s`.
ACCEPTANCE_LINES: list[tuple[tuple, str]] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

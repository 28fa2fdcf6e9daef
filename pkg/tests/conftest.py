import functools

import numpy as np
import pytest

from ncoest.core import Design, StudyDataset
from ncoest.oracle import calibrated_params


@functools.lru_cache(maxsize=None)
def _params(a_levels, p, design):
    return calibrated_params(a_levels, p, design)


@pytest.fixture
def params():
    """Cached calibrated parameters: params(a_levels=(0, 1, 2.5), p=0.14, design="Observational")."""

    def get(a_levels=(0.0, 1.0, 2.5), p=0.14, design="Observational"):
        return _params(tuple(float(a) for a in a_levels), float(p), Design(design).value)

    return get


def arms(y1_treated, y1_untreated, y2_treated, y2_untreated, **extra):
    """Dataset from per-arm outcome lists (treated first)."""
    t = [1] * len(y1_treated) + [0] * len(y1_untreated)
    return StudyDataset.from_arrays(t, list(y1_treated) + list(y1_untreated), list(y2_treated) + list(y2_untreated), **extra)


@pytest.fixture
def hand_data():
    # treated Y1 (1,0,0,0), untreated (1,1,0,0); treated Y2 (2,1,1,0), untreated (1,1,0,0)
    return arms([1, 0, 0, 0], [1, 1, 0, 0], [2, 1, 1, 0], [1, 1, 0, 0])


def random_dataset(rng, n, p1=(0.3, 0.4), lam=(0.8, 1.1), covariates=False):
    t = np.zeros(n, dtype=int)
    t[: n // 2] = 1
    rng.shuffle(t)
    y1 = (rng.random(n) < np.where(t == 1, p1[0], p1[1])).astype(int)
    y2 = rng.poisson(np.where(t == 1, lam[0], lam[1]))
    kw = {}
    if covariates:
        kw = dict(w_site=rng.integers(0, 3, n), w_age=15 + 0.5 * rng.integers(0, 13, n))
    return StudyDataset.from_arrays(t, y1, y2, **kw)


# Acceptance lines are collected here and echoed once at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

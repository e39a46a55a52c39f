import math

import numpy as np
import pytest

from ipwdebias.data import Dataset
from ipwdebias.logistic import LogisticFit


def fit_at(beta):
    """A converged fit pinned at ``beta``, for hand-computed examples."""
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
    return LogisticFit(beta, 0, 0.0, True)


def random_dataset(rng, n, d, scale=0.5):
    X = rng.standard_normal((n, d))
    a = (rng.random(n) < 1.0 / (1.0 + np.exp(-scale * X.sum(axis=1) / math.sqrt(d)))).astype(float)
    y = rng.standard_normal(n) + a
    return Dataset(X, a, y)


def overlapping_dataset(rng, n, d):
    """Random dataset with both arms present, redrawn until it is."""
    while True:
        data = random_dataset(rng, n, d)
        if 0 < data.treatments.sum() < n:
            return data


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)

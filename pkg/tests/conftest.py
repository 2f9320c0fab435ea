import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from preavgcov.core import SyncedPanel  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def brownian_panel(rng, n, cov=None, noise=0.0):
    """Synchronous panel on i/n with constant covariance and optional noise."""
    cov = np.eye(1) if cov is None else np.asarray(cov, dtype=float)
    L = np.linalg.cholesky(cov)
    r = rng.standard_normal((n, cov.shape[0])) @ L.T / np.sqrt(n)
    x = np.vstack([np.zeros((1, cov.shape[0])), np.cumsum(r, axis=0)])
    if noise:
        x = x + np.sqrt(noise) * rng.standard_normal(x.shape)
    return SyncedPanel(np.arange(n + 1) / n, x)

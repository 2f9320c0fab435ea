import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from preavgcov.core import (CovEstimate, KnClampWarning, NoiseCovEstimate, PreAvgConfig,
                            SyncedPanel, TickSeries, log_returns, resolve_kn)


def test_log_returns_trivial():
    p = SyncedPanel([0.0, 0.5, 1.0], [[0.0], [1.0], [3.0]])
    np.testing.assert_array_equal(log_returns(p), [[1.0], [2.0]])


def test_log_returns_constant_column():
    p = SyncedPanel([0.0, 0.5, 1.0], [[2.0, 1.0], [2.0, 3.0], [2.0, 0.0]])
    np.testing.assert_array_equal(log_returns(p)[:, 0], 0.0)


def test_log_returns_matches_scalar_loop(rng):
    prices = rng.standard_normal((20, 2)).cumsum(axis=0)
    p = SyncedPanel(np.linspace(0, 1, 20), prices)
    r = log_returns(p)
    for i in range(1, 20):
        for k in range(2):
            assert r[i - 1, k] == prices[i, k] - prices[i - 1, k]


@pytest.mark.parametrize("theta,delta,n,expected", [
    (1.0, 0.0, 23400, 152),
    (1.0, 0.1, 1000, 63),
    (1.0 / 3.0, 0.0, 900, 10),
])
def test_resolve_kn_examples(theta, delta, n, expected):
    assert resolve_kn(PreAvgConfig(theta, delta), n) == expected


def test_resolve_kn_explicit_and_clamp():
    assert resolve_kn(PreAvgConfig(explicit_kn=7), 100) == 7
    with pytest.warns(KnClampWarning):
        kn, flag = resolve_kn(PreAvgConfig(theta=10.0), 16, return_flag=True)
    assert (kn, flag) == (15, True)
    with pytest.warns(KnClampWarning):
        assert resolve_kn(PreAvgConfig(theta=0.01), 100) == 2
    with pytest.raises(ValueError):
        resolve_kn(PreAvgConfig(), 3)


@given(st.floats(0.05, 5.0), st.floats(0.0, 0.45), st.integers(4, 5000))
def test_resolve_kn_monotone(theta, delta, n):
    cfg = PreAvgConfig(theta, delta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", KnClampWarning)
        assert resolve_kn(cfg, n) <= resolve_kn(cfg, n + 1)
        kn = resolve_kn(cfg, n)
    assert 2 <= kn <= n - 1


def test_config_validation():
    with pytest.raises(ValueError):
        PreAvgConfig(theta=0.0)
    with pytest.raises(ValueError):
        PreAvgConfig(delta=0.5)
    with pytest.raises(ValueError):
        PreAvgConfig(explicit_kn=0)


def test_tick_series_invariants():
    TickSeries("a", [0.0, 1.0], [0.0, 0.1])
    with pytest.raises(ValueError):
        TickSeries("a", [0.5], [0.0])
    with pytest.raises(ValueError):
        TickSeries("a", [0.1, 0.1], [0.0, 0.0])
    with pytest.raises(ValueError):
        TickSeries("a", [0.0, 1.5], [0.0, 0.0])
    with pytest.raises(ValueError):
        TickSeries("a", [0.0, 1.0], [0.0, np.nan])
    s = TickSeries("a", [0.0, 0.5, 1.0], [1.0, 2.0, 3.0])
    assert s.count == 3
    with pytest.raises(ValueError):
        s.times[0] = 0.2


def test_panel_invariants():
    with pytest.raises(ValueError):
        SyncedPanel([0.0, 0.5], [[0.0], [1.0], [2.0]])
    with pytest.raises(ValueError):
        SyncedPanel([0.0, 0.0], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        SyncedPanel([0.0, 1.0], [[0.0], [np.inf]])
    with pytest.raises(ValueError):
        SyncedPanel([0.0, 1.0], [[0.0], [1.0]], scheme_tag="weekly")
    p = SyncedPanel.from_returns(np.ones((4, 2)))
    assert (p.n, p.d) == (4, 2)
    np.testing.assert_array_equal(p.log_prices[-1], [4.0, 4.0])


def test_cov_estimate_symmetrized(rng):
    m = rng.standard_normal((3, 3))
    est = CovEstimate(m, "x")
    assert np.max(np.abs(est.matrix - est.matrix.T)) == 0.0
    np.testing.assert_allclose(est.matrix, 0.5 * (m + m.T))
    assert CovEstimate(np.eye(2), "x").is_psd()
    assert not CovEstimate(np.diag([1.0, -1.0]), "x").is_psd()


def test_noise_cov_estimate_rejects_negative_diagonal():
    with pytest.raises(ValueError):
        NoiseCovEstimate(np.diag([1.0, -1.0]), 10)

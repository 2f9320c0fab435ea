import math
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brownian_panel
from oracles import golden_min, v_n_loop
from preavgcov.core import CovEstimate, PreAvgConfig, SyncedPanel
from preavgcov.estimators import mrc_balanced
from preavgcov.inference import (AvarEstimate, avar_mrc, build_weight_triple, ci_beta, ci_corr,
                                 ci_cov, default_triple, integrated_quarticity, select_theta,
                                 theta_star, v_n)
from preavgcov.preavg import (finite_sample_constants, make_min_weight, make_power_weight,
                              make_sine_weight)

MIN = make_min_weight()


def _objective(theta, iv, iq, psi, g=MIN):
    return 4 / g.psi2 ** 2 * (g.Phi22 * theta * iq + 2 * g.Phi12 * psi ** 2 * iv / theta
                              + g.Phi11 * psi ** 4 / theta ** 3)


# v_n

def test_v_n_constant_prices_zero():
    p = SyncedPanel(np.linspace(0, 1, 41), np.full((41, 2), 1.5))
    assert not v_n(p, 5, MIN).any()


def test_v_n_univariate_reduces(rng):
    p = brownian_panel(rng, 60)
    kn = 6
    r = np.diff(p.log_prices[:, 0])
    g = np.array([MIN.g(j / kn) for j in range(1, kn)])
    y = np.array([g @ r[i:i + kn - 1] for i in range(len(r) - kn + 2)])
    expect = np.sum(y ** 4) - np.sum(y[:-kn] ** 2 * y[kn:] ** 2)
    assert v_n(p, kn, MIN)[0, 0] == pytest.approx(expect, rel=1e-12)


def test_v_n_matches_loop_oracle(rng):
    p = brownian_panel(rng, 30, cov=[[1, 0.3], [0.3, 2]], noise=1e-2)
    got = v_n(p, 5, MIN)
    ref = v_n_loop(p.log_prices, 5)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-15)


def test_v_n_symmetric_and_relabel_invariant(rng):
    p = brownian_panel(rng, 200, cov=[[1, 0.2, 0.1], [0.2, 1, 0.3], [0.1, 0.3, 1]], noise=1e-3)
    v = v_n(p, 8, MIN)
    assert np.array_equal(v, v.T)
    perm = [2, 0, 1]
    q = SyncedPanel(p.grid_times, p.log_prices[:, perm])
    w = v_n(q, 8, MIN)
    idx = [a * 3 + b for a in perm for b in perm]
    np.testing.assert_allclose(w, v[np.ix_(idx, idx)], rtol=1e-12, atol=1e-15)


def test_v_n_requires_two_windows(rng):
    with pytest.raises(ValueError):
        v_n(brownian_panel(rng, 19), 10, MIN)


# weight triple

def test_repeated_scheme_is_singular():
    with pytest.raises(ValueError, match="singular"):
        build_weight_triple(MIN, MIN, make_sine_weight(1))


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
def test_triple_round_trip(theta):
    tr = build_weight_triple(make_min_weight(), make_sine_weight(1), make_sine_weight(2),
                             theta=theta)
    expect = np.array([2 * MIN.Phi22 * theta / MIN.psi2 ** 2,
                       2 * MIN.Phi12 / (MIN.psi2 ** 2 * theta),
                       2 * MIN.Phi11 / (MIN.psi2 ** 2 * theta ** 3)])
    np.testing.assert_allclose(tr.C @ tr.A, expect, rtol=1e-10)
    assert tr.names == ("min", "sine(1)", "sine(2)")


def test_triple_rows():
    s = make_power_weight(2, 1)
    tr = build_weight_triple(s, MIN, make_sine_weight(2), theta=0.5)
    np.testing.assert_allclose(tr.A[0], [0.25 * s.psi2 ** 2, s.psi1 * s.psi2, s.psi1 ** 2 / 0.25])


def test_default_triple_well_conditioned():
    tr = default_triple()
    assert tr.condition_number < 1e6
    np.testing.assert_allclose(tr.C @ tr.A, tr.target, rtol=1e-10)


def test_sine_parabola_cubic_triple_is_invertible_but_poorly_conditioned():
    # sin(pi x) and x(1-x) have psi1/psi2 ratios pi^2 and 10, so A is close to singular
    tr = build_weight_triple(make_sine_weight(1), make_power_weight(1, 1),
                             make_power_weight(2, 1))
    assert 1e6 < tr.condition_number < 1e12
    assert np.max(np.abs(tr.C)) > 1e4


def test_triple_finite_sample_round_trip():
    tr = default_triple(theta=152 / math.sqrt(23400), kn=152)
    fs = finite_sample_constants(MIN, 152)
    th = tr.theta
    expect = [2 * fs.Phi22_kn * th / fs.psi2_kn ** 2, 2 * fs.Phi12_kn / (fs.psi2_kn ** 2 * th),
              2 * fs.Phi11_kn / (fs.psi2_kn ** 2 * th ** 3)]
    np.testing.assert_allclose(tr.C @ tr.A, expect, rtol=1e-10)


def test_triple_rejects_bad_theta():
    with pytest.raises(ValueError):
        default_triple(theta=0.0)


# avar and quarticity

def test_avar_zero_data():
    p = SyncedPanel(np.linspace(0, 1, 401), np.zeros((401, 2)))
    a = avar_mrc(p)
    assert a.matrix.shape == (4, 4) and not a.matrix.any()
    assert not integrated_quarticity(p).any()


def test_avar_univariate_noiseless(rng):
    n, reps = 23400, 40
    vals = np.array([avar_mrc(brownian_panel(rng, n)).matrix[0, 0] for _ in range(reps)])
    fs = finite_sample_constants(MIN, 152)
    theta = 152 / math.sqrt(n)
    expect = 4 * fs.Phi22_kn * theta / fs.psi2_kn ** 2
    assert abs(vals.mean() - expect) < 3 * vals.std(ddof=1) / math.sqrt(reps)


def test_quarticity_univariate_noiseless(rng):
    reps = 40
    vals = np.array([integrated_quarticity(brownian_panel(rng, 23400))[0, 0] for _ in range(reps)])
    assert abs(vals.mean() - 2.0) < 3 * vals.std(ddof=1) / math.sqrt(reps)


def test_quarticity_bivariate_constant_vol(rng):
    S = np.array([[1.0, 0.6], [0.6, 2.0]])
    reps = 30
    acc = np.mean([integrated_quarticity(brownian_panel(rng, 23400, cov=S)) for _ in range(reps)],
                  axis=0)
    lam = np.zeros((4, 4))
    for k in range(2):
        for kp in range(2):
            for l in range(2):
                for lp in range(2):
                    lam[k * 2 + kp, l * 2 + lp] = S[k, l] * S[kp, lp] + S[k, lp] * S[kp, l]
    assert np.linalg.norm(acc - lam) / np.linalg.norm(lam) < 0.25


def test_avar_estimate_accessors():
    a = AvarEstimate(np.arange(16.0).reshape(4, 4), 1.0, 10, 100, ("a", "b", "c"))
    assert a.d == 2
    assert np.array_equal(a.matrix, a.matrix.T)
    assert a.entry(0, 1, 1, 0) == a.matrix[1, 2]


# theta*

def test_theta_star_noiseless_clamps():
    assert theta_star(1.0, 1.0, 0.0) == 0.1
    assert theta_star(1.0, 1.0, 0.0, theta_min=0.25) == 0.25


def test_theta_star_closed_form_example():
    a, b, c = 151 / 80640, -2 / 96 * 1e-4, -3 / 6 * 1e-8
    x = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
    got = theta_star(1.0, 1.0, 0.01)
    assert got == pytest.approx(math.sqrt(x), rel=1e-12)
    ref = golden_min(lambda t: _objective(t, 1.0, 1.0, 0.01), 1e-3, 10.0)
    assert got == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_theta_star_scaling(c):
    iv, iq, psi = 0.8, 1.3, 0.02
    ref = golden_min(lambda t: _objective(t, iv, iq, c * psi), 1e-4, 20.0)
    assert theta_star(iv, iq, c * psi) == pytest.approx(ref, rel=1e-6)
    # the root x scales with psi^2 when iv^2 = iq
    assert theta_star(1.0, 1.0, c * psi) == pytest.approx(c * theta_star(1.0, 1.0, psi), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(1e-3, 0.5))
def test_theta_star_first_order_condition(iv, iq, psi):
    t = theta_star(iv, iq, psi)
    h = 1e-5 * t
    f = lambda x: _objective(x, iv, iq, psi)  # noqa: E731
    d1 = (f(t + h) - f(t - h)) / (2 * h)
    d2 = (f(t + h) - 2 * f(t) + f(t - h)) / h ** 2
    assert abs(d1) < 1e-4 * abs(d2) * t


def test_theta_star_rejects_bad_input():
    with pytest.raises(ValueError):
        theta_star(0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        theta_star(1.0, 1.0, -0.1)


def test_select_theta_settles(rng):
    p = brownian_panel(rng, 23400, noise=1e-3)
    sel = select_theta(p)
    assert sel.converged
    # truth: iv = 1, iq = 1, psi = sqrt(1e-3)
    assert sel.theta == pytest.approx(theta_star(1.0, 1.0, math.sqrt(1e-3)), rel=0.35)


# confidence intervals

def _est(m, n=10000):
    return CovEstimate(np.asarray(m, float), "mrc", n_used=n)


def test_ci_zero_avar_zero_width():
    ci = ci_cov(_est([[1.0, 0.5], [0.5, 1.0]]), AvarEstimate(np.zeros((4, 4)), 1, 10, 10000, ()),
                0, 1)
    assert ci.half_width == 0 and ci.valid and ci.point == 0.5


def test_ci_cov_half_width():
    av = np.diag([1.0, 4.0, 4.0, 9.0])
    ci = ci_cov(_est([[1.0, 0.5], [0.5, 1.0]]), AvarEstimate(av, 1, 10, 10000, ()), 0, 1, 0.9)
    z = NormalDist().inv_cdf(0.95)
    assert ci.half_width == pytest.approx(z * 10000 ** -0.25 * 2.0, rel=1e-14)
    assert ci.lower < 0.5 < ci.upper and ci.covers(0.5)
    assert ci.statistic_kind == "covariance" and ci.level == 0.9


def test_ci_beta_zero_beta_uses_single_entry(rng):
    a = rng.standard_normal((4, 4))
    av = AvarEstimate(a @ a.T, 1, 10, 10000, ())
    est = _est([[2.0, 0.0], [0.0, 1.0]])
    ci = ci_beta(est, av, 0, 1)
    assert ci.point == 0.0
    assert ci.variance == pytest.approx(av.entry(0, 1, 0, 1) / 4.0, rel=1e-14)


def test_ci_beta_and_corr_delta_method(rng):
    a = rng.standard_normal((4, 4))
    av = AvarEstimate(a @ a.T, 1, 10, 10000, ())
    m = np.array([[2.0, 0.8], [0.8, 1.5]])
    est = _est(m)
    b = 0.8 / 2.0
    G = np.array([[av.entry(0, 1, 0, 1), av.entry(0, 1, 0, 0)],
                  [av.entry(0, 0, 0, 1), av.entry(0, 0, 0, 0)]])
    vb = np.array([1, -b]) @ G @ np.array([1, -b]) / 4.0
    assert ci_beta(est, av, 0, 1).variance == pytest.approx(vb, rel=1e-12)
    # numeric gradient of rho(M11, M12, M22) as an independent check
    f = lambda x: x[1] / math.sqrt(x[0] * x[2])  # noqa: E731
    x0 = np.array([2.0, 0.8, 1.5])
    grad = np.array([(f(x0 + e) - f(x0 - e)) / 2e-7 for e in np.eye(3) * 1e-7])
    idx = [(0, 0), (0, 1), (1, 1)]
    Gb = np.array([[av.entry(*p, *q) for q in idx] for p in idx])
    assert ci_corr(est, av, 0, 1).variance == pytest.approx(grad @ Gb @ grad, rel=1e-6)


def test_ci_negative_variance_flagged():
    av = AvarEstimate(-np.eye(4), 1, 10, 10000, ())
    ci = ci_cov(_est(np.eye(2)), av, 0, 1)
    assert not ci.valid and ci.half_width == 0 and ci.variance == -1.0
    assert not ci.covers(0.0)


def test_ci_rejects_bad_level_and_shape():
    est = _est(np.eye(2))
    with pytest.raises(ValueError):
        ci_cov(est, AvarEstimate(np.eye(4), 1, 10, 10, ()), 0, 1, level=1.0)
    with pytest.raises(ValueError):
        ci_cov(est, AvarEstimate(np.eye(9), 1, 10, 10, ()), 0, 1)
    with pytest.raises(ValueError):
        ci_beta(_est([[0.0, 0.0], [0.0, 1.0]]), AvarEstimate(np.eye(4), 1, 10, 10, ()), 0, 1)


def test_ci_end_to_end_covers_truth(rng):
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    p = brownian_panel(rng, 23400, cov=S, noise=1e-4)
    est = mrc_balanced(p, PreAvgConfig())
    av = avar_mrc(p)
    for ci in (ci_cov(est, av, 0, 1, 0.999), ci_beta(est, av, 0, 1, 0.999),
               ci_corr(est, av, 0, 1, 0.999)):
        assert ci.valid and ci.half_width > 0
    assert ci_cov(est, av, 0, 1, 0.999).covers(0.5)

"""Feasible inference for the balanced modulated realised covariance.

The asymptotic covariance of the vectorized estimator is a combination of
three unknown ``d^2 x d^2`` arrays (integrated quarticity, a signal/noise
cross term and a pure noise term). Each statistic :func:`v_n` computed with
some weight function estimates a different, known linear combination of the
three, so three weight functions are enough to solve for any target
combination.

Index convention: entry ``(k, k')`` of a ``d x d`` matrix maps to position
``k * d + k'`` of its vectorization (0-based).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional

import numpy as np

from .core import CovEstimate, PreAvgConfig, SyncedPanel, log_returns, resolve_kn
from .estimators import mrc_balanced, noise_cov
from .preavg import (WeightScheme, finite_sample_constants, make_min_weight,
                     make_sine_weight, preaveraged_returns)

__all__ = [
    "WeightTriple",
    "AvarEstimate",
    "ConfInterval",
    "v_n",
    "build_weight_triple",
    "default_triple",
    "avar_mrc",
    "integrated_quarticity",
    "theta_star",
    "select_theta",
    "ci_cov",
    "ci_beta",
    "ci_corr",
]

MAX_CONDITION = 1e12


def v_n(panel: SyncedPanel, kn: int, scheme: WeightScheme) -> np.ndarray:
    """Realised fourth-moment statistic of the pre-averaged returns.

    With ``chi_i = vec(Ybar_i Ybar_i')`` this is
    ``sum chi_i chi_i' - 1/2 sum (chi_i chi_{i+kn}' + chi_{i+kn} chi_i')``,
    the lagged sum running over all pairs of non-overlapping blocks that
    are exactly ``kn`` apart.

    Returns
    -------
    numpy.ndarray, shape (d*d, d*d)
        Symmetric, but not necessarily positive semi-definite.
    """
    n = panel.n
    kn = int(kn)
    if n < 2 * kn:
        raise ValueError(f"v_n needs n >= 2 kn (n={n}, kn={kn})")
    ybar = preaveraged_returns(log_returns(panel), kn, scheme)
    d = ybar.shape[1]
    chi = (ybar[:, :, None] * ybar[:, None, :]).reshape(-1, d * d)
    v = chi.T @ chi
    lag = chi[:-kn].T @ chi[kn:]
    v = v - 0.5 * (lag + lag.T)
    return 0.5 * (v + v.T)


def _scheme_numbers(scheme: WeightScheme, kn: Optional[int]):
    if kn is None:
        return scheme.psi1, scheme.psi2, scheme.Phi11, scheme.Phi12, scheme.Phi22
    fs = finite_sample_constants(scheme, kn)
    return fs.psi1_kn, fs.psi2_kn, fs.Phi11_kn, fs.Phi12_kn, fs.Phi22_kn


def _avar_coefficients(scheme, theta, kn=None):
    """Weights of (int Lambda, int Theta, Upsilon) in the avar of the
    estimator built from ``scheme``."""
    _, psi2, p11, p12, p22 = _scheme_numbers(scheme, kn)
    return np.array([2 * p22 * theta / psi2 ** 2,
                     2 * p12 / (psi2 ** 2 * theta),
                     2 * p11 / (psi2 ** 2 * theta ** 3)])


@dataclass(frozen=True)
class WeightTriple:
    """Three auxiliary weight functions and the solved combination weights.

    Row ``m`` of ``A`` holds ``(theta^2 psi2^2, psi1 psi2, psi1^2 / theta^2)``
    for ``schemes[m]``; ``C`` solves ``C A = target`` where ``target`` are the
    avar coefficients of ``g0``. ``kn`` is set when finite-sample constants
    were used.
    """

    schemes: tuple
    g0: WeightScheme
    theta: float
    kn: Optional[int]
    A: np.ndarray
    C: np.ndarray
    target: np.ndarray
    condition_number: float

    @property
    def names(self) -> tuple:
        return tuple(s.name for s in self.schemes)

    def weights_for(self, target) -> np.ndarray:
        """Combination weights ``target @ inv(A)`` for any target vector."""
        return np.linalg.solve(self.A.T, np.asarray(target, dtype=float))


def build_weight_triple(g1: WeightScheme, g2: WeightScheme, g3: WeightScheme,
                        theta: float = 1.0, g0: Optional[WeightScheme] = None,
                        kn: Optional[int] = None,
                        max_condition: float = MAX_CONDITION) -> WeightTriple:
    """Assemble the coefficient matrix and combination weights.

    Parameters
    ----------
    g1, g2, g3 : WeightScheme
        Auxiliary weight functions; their coefficient rows must be linearly
        independent.
    theta : float
        Window constant.
    g0 : WeightScheme, optional
        Weight function of the estimator whose avar is wanted; defaults to
        ``min(x, 1 - x)``.
    kn : int, optional
        Use the Riemann constants at this window instead of the limits.

    Raises
    ------
    ValueError
        If ``A`` is singular or its condition number exceeds
        ``max_condition``.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    g0 = g0 or make_min_weight()
    schemes = (g1, g2, g3)
    rows = []
    for s in schemes:
        psi1, psi2, *_ = _scheme_numbers(s, kn)
        rows.append([theta ** 2 * psi2 ** 2, psi1 * psi2, psi1 ** 2 / theta ** 2])
    A = np.array(rows)
    cond = float(np.linalg.cond(A))
    if not math.isfinite(cond) or cond > max_condition:
        raise ValueError(f"weight triple {[s.name for s in schemes]} gives a singular "
                         f"coefficient matrix (condition number {cond:.3g})")
    target = _avar_coefficients(g0, theta, kn)
    C = np.linalg.solve(A.T, target)
    for arr in (A, C, target):
        arr.setflags(write=False)
    return WeightTriple(schemes, g0, float(theta), kn, A, C, target, cond)


def default_triple(theta: float = 1.0, kn: Optional[int] = None) -> WeightTriple:
    """``min(x, 1 - x)``, ``sin(pi x)`` and ``sin(2 pi x)`` estimating the
    avar of the ``min(x, 1 - x)`` estimator.

    The ratios ``psi1 / psi2`` of the three (12, pi^2 and 4 pi^2) are well
    apart, which keeps ``A`` far from singular. Pairs with close ratios,
    such as ``sin(pi x)`` and ``x (1 - x)``, blow the combination weights up
    by orders of magnitude.
    """
    return build_weight_triple(make_min_weight(), make_sine_weight(1),
                               make_sine_weight(2), theta=theta, kn=kn)


@dataclass(frozen=True)
class AvarEstimate:
    """Estimated ``d^2 x d^2`` asymptotic covariance of ``vec(MRC)``."""

    matrix: np.ndarray
    theta_used: float
    kn_used: int
    n_used: int
    triple_names: tuple

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return int(round(math.sqrt(self.matrix.shape[0])))

    def entry(self, a, b, c, e) -> float:
        """Covariance between entries ``(a, b)`` and ``(c, e)``."""
        d = self.d
        return float(self.matrix[a * d + b, c * d + e])


def _triple_at(panel, config, triple):
    kn = resolve_kn(config, panel.n)
    theta = kn / math.sqrt(panel.n)
    base = triple or default_triple()
    return kn, build_weight_triple(*base.schemes, theta=theta, g0=base.g0, kn=kn)


def _combine(panel, kn, triple, weights):
    return sum(w * v_n(panel, kn, s) for w, s in zip(weights, triple.schemes))


def avar_mrc(panel: SyncedPanel, config: PreAvgConfig = PreAvgConfig(),
             triple: Optional[WeightTriple] = None) -> AvarEstimate:
    """Estimate the asymptotic covariance of the balanced MRC.

    The window ``kn`` is resolved from ``config`` and shared by all three
    auxiliary statistics. The triple is rebuilt at ``theta = kn / sqrt(n)``
    with the Riemann constants at ``kn``, so only its weight functions are
    taken from ``triple``.
    """
    kn, tr = _triple_at(panel, config, triple)
    m = _combine(panel, kn, tr, tr.C)
    return AvarEstimate(m, tr.theta, kn, panel.n, tr.names)


def integrated_quarticity(panel: SyncedPanel, config: PreAvgConfig = PreAvgConfig(),
                          triple: Optional[WeightTriple] = None) -> np.ndarray:
    """Estimate ``int Lambda`` (``2 int sigma^4`` in one dimension)."""
    kn, tr = _triple_at(panel, config, triple)
    return _combine(panel, kn, tr, tr.weights_for([1.0, 0.0, 0.0]))


def _theta_objective(theta, iv, iq, omega2, consts):
    psi2, p11, p12, p22 = consts
    return 4.0 / psi2 ** 2 * (p22 * theta * iq + 2 * p12 * omega2 * iv / theta
                              + p11 * omega2 ** 2 / theta ** 3)


def theta_star(iv: float, iq: float, psi: float, scheme: Optional[WeightScheme] = None,
               max_iter: int = 50, tol: float = 1e-12, theta_min: float = 0.1) -> float:
    """Window constant minimizing the univariate asymptotic variance.

    Parameters
    ----------
    iv, iq : float
        Integrated variance and integrated quarticity ``int sigma^4``.
    psi : float
        Noise standard deviation.
    scheme : WeightScheme, optional
        Defaults to ``min(x, 1 - x)``.
    max_iter, tol : int, float
        Newton polishing of the closed-form root.
    theta_min : float
        Returned when ``psi == 0``: without noise the variance decreases
        towards ``theta = 0``.

    Returns
    -------
    float
        ``sqrt(x)`` where ``x`` is the positive root of
        ``Phi22 iq x^2 - 2 Phi12 psi^2 iv x - 3 Phi11 psi^4``.
    """
    if not (iv > 0 and iq > 0):
        raise ValueError("iv and iq must be positive")
    if psi < 0:
        raise ValueError("psi must be non-negative")
    if psi == 0:
        return float(theta_min)
    scheme = scheme or make_min_weight()
    qa = scheme.Phi22 * iq
    qb = -2.0 * scheme.Phi12 * psi ** 2 * iv
    qc = -3.0 * scheme.Phi11 * psi ** 4
    disc = math.sqrt(qb * qb - 4 * qa * qc)
    # qb <= 0, so the '+' branch has no cancellation
    x = (-qb + disc) / (2 * qa)
    for _ in range(max_iter):
        f = (qa * x + qb) * x + qc
        step = f / (2 * qa * x + qb)
        x -= step
        if abs(step) <= tol * x:
            break
    return math.sqrt(x)


@dataclass(frozen=True)
class ThetaSelection:
    theta: float
    iterations: int
    converged: bool
    history: tuple


def select_theta(panel: SyncedPanel, asset: int = 0, scheme: Optional[WeightScheme] = None,
                 triple: Optional[WeightTriple] = None, theta0: float = 1.0,
                 max_iter: int = 10, tol: float = 1e-3,
                 theta_bounds=(0.1, 10.0)) -> ThetaSelection:
    """Iterate pilot estimates and :func:`theta_star` until ``theta`` settles.

    At each step the integrated variance, integrated quarticity and noise
    variance of one asset are re-estimated at the current ``theta``. Steps
    after the first are damped by averaging with the previous value, and
    the search stops once ``theta`` moves by less than ``tol`` relative or
    the resolved window no longer changes.
    """
    scheme = scheme or make_min_weight()
    uni = SyncedPanel(panel.grid_times, panel.log_prices[:, [asset]], panel.scheme_tag)
    omega2 = float(noise_cov(uni).matrix[0, 0])
    theta = float(theta0)
    root_n = math.sqrt(panel.n)
    history = [theta]
    for it in range(1, max_iter + 1):
        cfg = PreAvgConfig(theta=theta)
        iv = float(mrc_balanced(uni, cfg, scheme).matrix[0, 0])
        iq = 0.5 * float(integrated_quarticity(uni, cfg, triple)[0, 0])
        if iv <= 0 or iq <= 0:
            return ThetaSelection(theta, it, False, tuple(history))
        new = theta_star(iv, iq, math.sqrt(omega2), scheme)
        new = min(max(new, theta_bounds[0]), theta_bounds[1])
        if it > 1:
            # the window is an integer, so undamped steps can flip between two kn
            new = 0.5 * (theta + new)
        history.append(new)
        same_kn = math.floor(new * root_n) == math.floor(theta * root_n)
        if abs(new - theta) <= tol * theta or same_kn:
            return ThetaSelection(new, it, True, tuple(history))
        theta = new
    return ThetaSelection(theta, max_iter, False, tuple(history))


# --------------------------------------------------------------------------
# confidence intervals


@dataclass(frozen=True)
class ConfInterval:
    """``point +/- half_width`` at confidence ``level``.

    ``valid`` is False when the estimated variance is negative; the interval
    is then empty (``half_width = 0``) and ``variance`` keeps the raw value.
    """

    point: float
    half_width: float
    level: float
    statistic_kind: str
    variance: float = math.nan
    valid: bool = True

    @property
    def lower(self) -> float:
        return self.point - self.half_width

    @property
    def upper(self) -> float:
        return self.point + self.half_width

    def covers(self, value: float) -> bool:
        return self.valid and self.lower <= value <= self.upper


def _z(level):
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def _interval(point, var, n, level, kind):
    if not math.isfinite(var) or var < 0:
        return ConfInterval(float(point), 0.0, level, kind, float(var), False)
    hw = _z(level) * n ** -0.25 * math.sqrt(var)
    return ConfInterval(float(point), hw, level, kind, float(var), True)


def _check(est, avar):
    if avar.matrix.shape[0] != est.d ** 2:
        raise ValueError("avar dimension does not match the estimate")


def ci_cov(est: CovEstimate, avar: AvarEstimate, i: int, j: int,
           level: float = 0.95) -> ConfInterval:
    """Interval for the integrated covariance of assets ``i`` and ``j``."""
    _check(est, avar)
    var = avar.entry(i, j, i, j)
    return _interval(est.matrix[i, j], var, est.n_used, level, "covariance")


def ci_beta(est: CovEstimate, avar: AvarEstimate, i: int, j: int,
            level: float = 0.95) -> ConfInterval:
    """Interval for the regression coefficient ``M[i, j] / M[i, i]``."""
    _check(est, avar)
    m = est.matrix
    if m[i, i] <= 0:
        raise ValueError(f"variance entry [{i},{i}] must be positive")
    beta = m[i, j] / m[i, i]
    gamma = np.array([[avar.entry(i, j, i, j), avar.entry(i, j, i, i)],
                      [avar.entry(i, i, i, j), avar.entry(i, i, i, i)]])
    v = np.array([1.0, -beta])
    var = float(v @ gamma @ v) / m[i, i] ** 2
    return _interval(beta, var, est.n_used, level, "beta")


def ci_corr(est: CovEstimate, avar: AvarEstimate, i: int, j: int,
            level: float = 0.95) -> ConfInterval:
    """Interval for the correlation of assets ``i`` and ``j``."""
    _check(est, avar)
    m = est.matrix
    if m[i, i] <= 0 or m[j, j] <= 0:
        raise ValueError("variance entries must be positive")
    rho = m[i, j] / math.sqrt(m[i, i] * m[j, j])
    idx = [(i, i), (i, j), (j, j)]
    gbar = np.array([[avar.entry(*p, *q) for q in idx] for p in idx])
    h = np.array([-0.5 * m[i, j] / m[i, i], 1.0, -0.5 * m[i, j] / m[j, j]])
    var = float(h @ gbar @ h) / (m[i, i] * m[j, j])
    return _interval(rho, var, est.n_used, level, "correlation")

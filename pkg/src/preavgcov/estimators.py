"""Integrated covariance estimators.

Synchronous-panel estimators (realised covariance, noise covariance and the
modulated realised covariance in its balanced, positive semi-definite and
kernel forms) and tick-level estimators that need no synchronization (the
Hayashi-Yoshida estimator and its pre-averaged version).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numba
import numpy as np

from .core import (CovEstimate, NoiseCovEstimate, PreAvgConfig, SyncedPanel,
                   TickSeries, log_returns, resolve_kn)
from .preavg import (WeightScheme, finite_sample_constants, make_min_weight,
                     preaveraged_returns)

__all__ = [
    "KernelForm",
    "DerivedStats",
    "SchemeReport",
    "realised_cov",
    "noise_cov",
    "mrc_balanced",
    "mrc_psd",
    "kernel_form_weights",
    "mrc_kernel_form",
    "hy_classic",
    "hy_preavg",
    "hy_preavg_pair",
    "beta_of",
    "corr_of",
    "scheme_diagnostics",
]


def realised_cov(panel: SyncedPanel) -> CovEstimate:
    """Sum of outer products of the panel's returns."""
    r = log_returns(panel)
    return CovEstimate(r.T @ r, "realised_cov", n_used=panel.n, psd_guaranteed=True,
                       extra={"sync": panel.scheme_tag})


def noise_cov(panel: SyncedPanel) -> NoiseCovEstimate:
    """Noise covariance estimate ``(1/2n) sum r r'``."""
    r = log_returns(panel)
    return NoiseCovEstimate(r.T @ r / (2.0 * panel.n), panel.n)


def _preaveraged_sum(r, kn, scheme):
    ybar = preaveraged_returns(r, kn, scheme)
    return ybar.T @ ybar


def mrc_balanced(panel: SyncedPanel, config: PreAvgConfig = PreAvgConfig(),
                 scheme: Optional[WeightScheme] = None,
                 finite_sample_adjust: bool = True) -> CovEstimate:
    """Bias-corrected modulated realised covariance with balanced window.

    Parameters
    ----------
    panel : SyncedPanel
    config : PreAvgConfig
        Must have ``delta == 0``; ``kn = floor(theta * sqrt(n))`` unless
        ``explicit_kn`` is set.
    scheme : WeightScheme, optional
        Defaults to ``min(x, 1 - x)``.
    finite_sample_adjust : bool
        Apply the ``n / (n - kn + 2)`` summand-count factor and the final
        rescaling that undoes the attenuation caused by subtracting the
        noise estimate. Disable to obtain the plain kernel-equivalent
        statistic.

    Returns
    -------
    CovEstimate
        ``extra["not_psd"]`` is set when the corrected matrix has a
        negative eigenvalue; negative entries are never truncated.

    Notes
    -----
    The noise bias is removed with ``theta**2 = kn**2 / n`` taken from the
    window actually used, and with the Riemann constants at that window.
    """
    if config.delta != 0.0 and config.explicit_kn is None:
        raise ValueError("mrc_balanced needs delta = 0; use mrc_psd for delta > 0")
    scheme = scheme or make_min_weight()
    r = log_returns(panel)
    n = panel.n
    kn, clamped = resolve_kn(config, n, return_flag=True)
    fs = finite_sample_constants(scheme, kn)
    theta2 = kn * kn / n
    bias_coef = fs.psi1_kn / (theta2 * fs.psi2_kn)

    m = _preaveraged_sum(r, kn, scheme) / (fs.psi2_kn * kn)
    psi_hat = r.T @ r / (2.0 * n)
    if finite_sample_adjust:
        m = m * (n / (n - kn + 2))
    m = m - bias_coef * psi_hat
    if finite_sample_adjust:
        m = m / (1.0 - bias_coef / (2.0 * n))
    m = 0.5 * (m + m.T)
    not_psd = bool(np.linalg.eigvalsh(m)[0] < -1e-12 * abs(np.trace(m)))
    return CovEstimate(m, "mrc", kn_used=kn, n_used=n, bias_corrected=True,
                       psd_guaranteed=False,
                       extra=dict(theta=math.sqrt(theta2), theta_config=config.theta,
                                  delta=0.0, scheme=scheme.name, sync=panel.scheme_tag,
                                  kn_clamped=clamped, not_psd=not_psd))


def mrc_psd(panel: SyncedPanel, config: PreAvgConfig = PreAvgConfig(delta=0.1),
            scheme: Optional[WeightScheme] = None) -> CovEstimate:
    """Modulated realised covariance with a long window and no bias
    correction; positive semi-definite by construction.
    """
    if not config.delta > 0.0 and config.explicit_kn is None:
        raise ValueError("mrc_psd needs delta in (0, 1/2)")
    scheme = scheme or make_min_weight()
    r = log_returns(panel)
    n = panel.n
    kn, clamped = resolve_kn(config, n, return_flag=True)
    fs = finite_sample_constants(scheme, kn)
    m = _preaveraged_sum(r, kn, scheme) * (n / (n - kn + 2)) / (fs.psi2_kn * kn)
    return CovEstimate(m, "mrc_psd", kn_used=kn, n_used=n, bias_corrected=False,
                       psd_guaranteed=True,
                       extra=dict(theta=kn / n ** (0.5 + config.delta), theta_config=config.theta,
                                  delta=config.delta, scheme=scheme.name,
                                  sync=panel.scheme_tag, kn_clamped=clamped))


@dataclass(frozen=True)
class KernelForm:
    """Autocovariance weights that reproduce the balanced MRC.

    ``delta0[i-1]`` weighs ``r_i r_i'`` and ``deltah[h-1, i-1]`` weighs
    ``r_i r_{i+h}' + r_{i+h} r_i'`` (zero for ``i > n - h``).
    """

    kn: int
    delta0: np.ndarray
    deltah: np.ndarray
    implied_kernel: Callable = field(repr=False)


def kernel_form_weights(n: int, kn: int, scheme: Optional[WeightScheme] = None) -> KernelForm:
    """Piecewise boundary/interior weights for the kernel representation."""
    scheme = scheme or make_min_weight()
    n, kn = int(n), int(kn)
    if kn < 2:
        raise ValueError("kn must be at least 2")
    if n < 2 * kn - 4:
        raise ValueError("kernel form needs n >= 2 kn - 4 so boundary pieces do not overlap")
    fs = finite_sample_constants(scheme, kn)
    scale = 1.0 / (fs.psi2_kn * kn)
    noise_term = fs.psi1_kn / ((kn * kn / n) * fs.psi2_kn * 2.0 * n)

    def g(j):
        # g is zero outside [0, 1] so shifted arguments past 1 drop out
        return scheme.g(np.asarray(j, dtype=float) / kn)

    i = np.arange(1, n + 1)
    low = i <= kn - 2
    high = i >= n - kn + 3
    j = np.arange(1, kn)
    head = np.concatenate([[0.0], np.cumsum(g(j) ** 2)])            # sum_{j<=m} g(j/kn)^2
    tail = np.concatenate([[0.0], np.cumsum(g(kn - j) ** 2)])       # sum_{j<=m} g((kn-j)/kn)^2
    d0 = np.full(n, head[kn - 1])
    d0[low] = head[i[low]]
    d0[high] = tail[n - i[high] + 1]
    delta0 = scale * d0 - noise_term

    deltah = np.zeros((max(kn - 2, 0), n))
    for h in range(1, kn - 1):
        head_h = np.concatenate([[0.0], np.cumsum(g(j) * g(j + h))])
        tail_h = np.concatenate([[0.0], np.cumsum(g(kn - j) * g(kn - j + h))])
        ih = i[: n - h]
        row = np.full(n - h, head_h[kn - h - 1])
        lo = ih <= kn - h - 2
        hi = ih >= n - kn + 3
        row[lo] = head_h[ih[lo]]
        row[hi] = tail_h[n - ih[hi] + 1]
        deltah[h - 1, : n - h] = scale * row
    delta0.setflags(write=False)
    deltah.setflags(write=False)
    return KernelForm(kn, delta0, deltah, scheme.kernel)


def mrc_kernel_form(panel: SyncedPanel, config: PreAvgConfig = PreAvgConfig(),
                    scheme: Optional[WeightScheme] = None) -> CovEstimate:
    """Balanced MRC written as a flat-top kernel estimator.

    Equals :func:`mrc_balanced` with ``finite_sample_adjust=False``: no
    summand-count factor and no final rescaling.
    """
    if config.delta != 0.0 and config.explicit_kn is None:
        raise ValueError("kernel form is defined for the balanced window (delta = 0)")
    scheme = scheme or make_min_weight()
    r = log_returns(panel)
    n = panel.n
    kn = resolve_kn(config, n)
    kf = kernel_form_weights(n, kn, scheme)
    m = (r * kf.delta0[:, None]).T @ r
    for h in range(1, kn - 1):
        w = kf.deltah[h - 1, : n - h]
        c = (r[: n - h] * w[:, None]).T @ r[h:]
        m = m + c + c.T
    return CovEstimate(m, "mrc_kernel", kn_used=kn, n_used=n, bias_corrected=True,
                       extra=dict(theta=kn / math.sqrt(n), scheme=scheme.name,
                                  sync=panel.scheme_tag))


# --------------------------------------------------------------------------
# Hayashi-Yoshida type estimators


@numba.njit(cache=True)
def _overlap_sum(lo_a, hi_a, x, lo_b, hi_b, y):
    """sum_i sum_j x_i y_j over intervals (lo_a[i], hi_a[i]] and
    (lo_b[j], hi_b[j]] that intersect.

    Both interval families must have non-decreasing end points. Products
    are accumulated with i outer and j ascending, the same order as a
    plain double loop.
    """
    total = 0.0
    start = 0
    nb = lo_b.shape[0]
    for i in range(lo_a.shape[0]):
        while start < nb and hi_b[start] <= lo_a[i]:
            start += 1
        j = start
        while j < nb and lo_b[j] < hi_a[i]:
            if hi_b[j] > lo_a[i]:
                total += x[i] * y[j]
            j += 1
    return total


def hy_classic(a: TickSeries, b: TickSeries) -> float:
    """Hayashi-Yoshida covariance of two tick series.

    Sums ``da_i * db_j`` over all return pairs whose intervals
    ``(t_{i-1}, t_i]`` and ``(s_{j-1}, s_j]`` intersect.
    """
    return float(_overlap_sum(a.times[:-1], a.times[1:], np.diff(a.log_prices),
                              b.times[:-1], b.times[1:], np.diff(b.log_prices)))


def _preavg_blocks(s: TickSeries, kn, scheme):
    ybar = preaveraged_returns(np.diff(s.log_prices), kn, scheme)
    t = s.times
    last = t.size - 1
    idx = np.arange(ybar.size)
    # block i spans (t_i, t_{i+kn}], truncated at the final tick
    return t[idx], t[np.minimum(idx + kn, last)], ybar


def hy_preavg_pair(a: TickSeries, b: TickSeries, kn: int,
                   scheme: Optional[WeightScheme] = None) -> float:
    """Pre-averaged Hayashi-Yoshida covariance of one pair at window ``kn``."""
    scheme = scheme or make_min_weight()
    fs = finite_sample_constants(scheme, kn)
    lo_a, hi_a, ya = _preavg_blocks(a, kn, scheme)
    lo_b, hi_b, yb = _preavg_blocks(b, kn, scheme)
    return float(_overlap_sum(lo_a, hi_a, ya, lo_b, hi_b, yb)) / (fs.psi_hy_kn * kn) ** 2


def hy_preavg(series: Sequence[TickSeries], config: PreAvgConfig = PreAvgConfig(),
              scheme: Optional[WeightScheme] = None) -> CovEstimate:
    """Pre-averaged Hayashi-Yoshida covariance matrix from raw tick series.

    One window ``kn`` is resolved from the total number of observations
    ``n = sum n_k`` and used for every pair. Each series is pre-averaged
    in its own tick index and block pairs whose spans overlap in time are
    multiplied. The result is not guaranteed positive semi-definite.

    Raises
    ------
    ValueError
        If any series has fewer than ``kn`` returns.
    """
    if config.delta != 0.0 and config.explicit_kn is None:
        raise ValueError("hy_preavg uses the balanced window (delta = 0)")
    scheme = scheme or make_min_weight()
    series = list(series)
    n_total = sum(s.count for s in series)
    kn = resolve_kn(config, n_total)
    for s in series:
        if s.count - 1 < kn:
            raise ValueError(f"{s.asset_id}: {s.count - 1} returns is fewer than kn={kn}")
    fs = finite_sample_constants(scheme, kn)
    blocks = [_preavg_blocks(s, kn, scheme) for s in series]
    d = len(series)
    m = np.zeros((d, d))
    for k in range(d):
        for l in range(k, d):
            val = _overlap_sum(*blocks[k], *blocks[l]) / (fs.psi_hy_kn * kn) ** 2
            m[k, l] = m[l, k] = val
    return CovEstimate(m, "hy_preavg", kn_used=kn, n_used=n_total, bias_corrected=False,
                       psd_guaranteed=False,
                       extra=dict(theta=kn / math.sqrt(n_total), scheme=scheme.name,
                                  counts=[s.count for s in series]))


# --------------------------------------------------------------------------
# derived statistics


@dataclass(frozen=True)
class DerivedStats:
    """Realised beta ``M[i,j] / M[i,i]`` and correlation of assets i, j."""

    beta: float
    corr: float
    i: int
    j: int


def _derived(m, i, j, need_j):
    if m[i, i] <= 0:
        raise ValueError(f"variance entry [{i},{i}] must be positive, got {m[i, i]}")
    if need_j and m[j, j] <= 0:
        raise ValueError(f"variance entry [{j},{j}] must be positive, got {m[j, j]}")
    beta = m[i, j] / m[i, i]
    corr = m[i, j] / math.sqrt(m[i, i] * m[j, j]) if m[j, j] > 0 else math.nan
    return DerivedStats(float(beta), float(corr), i, j)


def beta_of(est: CovEstimate, i: int, j: int) -> DerivedStats:
    """Regression coefficient of asset ``j`` on asset ``i``."""
    return _derived(est.matrix, i, j, need_j=False)


def corr_of(est: CovEstimate, i: int, j: int) -> DerivedStats:
    """Correlation between assets ``i`` and ``j``."""
    return _derived(est.matrix, i, j, need_j=True)


# --------------------------------------------------------------------------
# sampling scheme regularity


@dataclass(frozen=True)
class SchemeReport:
    """``k_hat``: largest number of one series' ticks inside a single
    inter-tick interval of another; ``c_hat``: largest ratio of maximal to
    minimal spacing within a series.
    """

    k_hat: int
    c_hat: float
    spacing_ratios: tuple
    warnings: tuple = ()


def scheme_diagnostics(series: Sequence[TickSeries], k_bound: Optional[float] = None,
                       c_bound: Optional[float] = None) -> SchemeReport:
    """Check the clustering and spacing regularity of observation schemes.

    The conditions are asymptotic, so violations of the optional bounds
    are only reported in ``warnings``.
    """
    series = list(series)
    if len(series) < 2:
        raise ValueError("need at least two series")
    k_hat = 0
    for a in series:
        for b in series:
            if a is b:
                continue
            # ticks of a in each half-open interval (t_{i-1}, t_i] of b
            right = np.searchsorted(a.times, b.times[1:], side="right")
            left = np.searchsorted(a.times, b.times[:-1], side="right")
            k_hat = max(k_hat, int(np.max(right - left)))
    ratios = []
    for s in series:
        dt = np.diff(s.times)
        ratios.append(float(dt.max() / dt.min()))
    c_hat = max(ratios)
    notes = []
    if k_bound is not None and k_hat > k_bound:
        notes.append(f"clustering count {k_hat} exceeds {k_bound}")
    if c_bound is not None and c_hat > c_bound:
        notes.append(f"spacing ratio {c_hat:.3g} exceeds {c_bound}")
    return SchemeReport(k_hat, c_hat, tuple(ratios), tuple(notes))

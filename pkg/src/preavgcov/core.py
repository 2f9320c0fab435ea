"""Shared containers: tick series, synchronized panels, window configuration
and covariance estimates.

All containers are frozen dataclasses whose array fields are copied and set
read-only on construction, so they can be shared freely between threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "TickSeries",
    "SyncedPanel",
    "PreAvgConfig",
    "CovEstimate",
    "NoiseCovEstimate",
    "KnClampWarning",
    "log_returns",
    "resolve_kn",
]

SCHEME_TAGS = ("calendar", "refresh_time", "native_synchronous")


class KnClampWarning(UserWarning):
    """The requested pre-averaging window had to be clamped into [2, n-1]."""


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TickSeries:
    """Irregularly spaced log-price observations of a single asset.

    Parameters
    ----------
    asset_id : str
        Label of the asset.
    times : array_like
        Strictly increasing observation times in [0, 1] (fraction of the
        trading session).
    log_prices : array_like
        Observed log-prices, same length as ``times``.
    """

    asset_id: str
    times: np.ndarray
    log_prices: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        p = _frozen(self.log_prices)
        if t.ndim != 1 or p.ndim != 1 or t.shape != p.shape:
            raise ValueError("times and log_prices must be 1-d arrays of equal length")
        if t.size < 2:
            raise ValueError(f"{self.asset_id}: a tick series needs at least 2 observations")
        if not np.all(np.isfinite(t)) or t[0] < 0.0 or t[-1] > 1.0:
            raise ValueError(f"{self.asset_id}: times must lie in [0, 1]")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError(
                f"{self.asset_id}: times must be strictly increasing "
                "(aggregate duplicate timestamps before construction)")
        if not np.all(np.isfinite(p)):
            raise ValueError(f"{self.asset_id}: log_prices must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "log_prices", p)

    @property
    def count(self) -> int:
        return int(self.times.size)

    def __len__(self):
        return self.count


@dataclass(frozen=True)
class SyncedPanel:
    """``d`` assets observed on a common grid of ``n + 1`` time points."""

    grid_times: np.ndarray
    log_prices: np.ndarray
    scheme_tag: str = "native_synchronous"
    asset_ids: tuple = ()

    def __post_init__(self):
        t = _frozen(self.grid_times)
        p = np.array(self.log_prices, dtype=float, copy=True)
        if p.ndim == 1:
            p = p[:, None]
        p.setflags(write=False)
        if t.ndim != 1 or p.ndim != 2 or p.shape[0] != t.size:
            raise ValueError("log_prices must have one row per grid time")
        if t.size < 2:
            raise ValueError("a panel needs at least 2 grid points")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("grid_times must be strictly increasing")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
            raise ValueError("panel entries must be finite")
        if self.scheme_tag not in SCHEME_TAGS:
            raise ValueError(f"unknown scheme_tag {self.scheme_tag!r}")
        ids = tuple(self.asset_ids) or tuple(str(k) for k in range(p.shape[1]))
        if len(ids) != p.shape[1]:
            raise ValueError("asset_ids must name every column")
        object.__setattr__(self, "grid_times", t)
        object.__setattr__(self, "log_prices", p)
        object.__setattr__(self, "asset_ids", ids)

    @property
    def d(self) -> int:
        return int(self.log_prices.shape[1])

    @property
    def n(self) -> int:
        """Number of returns (grid intervals)."""
        return int(self.log_prices.shape[0] - 1)

    @classmethod
    def from_returns(cls, returns, scheme_tag="native_synchronous"):
        """Build an equidistant panel on ``i/n`` whose first row is zero."""
        r = np.asarray(returns, dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        n = r.shape[0]
        prices = np.vstack([np.zeros((1, r.shape[1])), np.cumsum(r, axis=0)])
        return cls(np.arange(n + 1) / n, prices, scheme_tag)


@dataclass(frozen=True)
class PreAvgConfig:
    """Pre-averaging window rule ``kn = floor(theta * n**(1/2 + delta))``.

    ``delta = 0`` is the balanced window used with bias correction; a
    positive ``delta`` lengthens the window so that noise vanishes without
    correction. ``explicit_kn`` overrides the rule.
    """

    theta: float = 1.0
    delta: float = 0.0
    explicit_kn: Optional[int] = None

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ValueError("theta must be positive")
        if not (0.0 <= self.delta < 0.5):
            raise ValueError("delta must lie in [0, 1/2)")
        if self.explicit_kn is not None and int(self.explicit_kn) < 1:
            raise ValueError("explicit_kn must be a positive integer")


def resolve_kn(config: PreAvgConfig, n: int, return_flag: bool = False):
    """Resolve the pre-averaging window for a sample of ``n`` returns.

    The window is clamped into ``[2, n - 1]``; clamping raises a
    :class:`KnClampWarning` and, with ``return_flag=True``, is reported as
    the second element of the returned tuple.
    """
    n = int(n)
    if n < 4:
        raise ValueError(f"need at least 4 returns to pre-average, got n={n}")
    if config.explicit_kn is not None:
        raw = int(config.explicit_kn)
    else:
        # tolerance guards floor() against values like 9.999999999999998
        raw = int(math.floor(config.theta * n ** (0.5 + config.delta) + 1e-9))
    kn = min(max(raw, 2), n - 1)
    clamped = kn != raw
    if clamped:
        warnings.warn(f"kn={raw} clamped to {kn} for n={n}", KnClampWarning, stacklevel=2)
    return (kn, clamped) if return_flag else kn


def log_returns(panel: SyncedPanel) -> np.ndarray:
    """First differences of the panel's log-prices, shape ``(n, d)``."""
    return np.diff(panel.log_prices, axis=0)


@dataclass(frozen=True)
class CovEstimate:
    """A ``d x d`` integrated covariance estimate with its provenance.

    The matrix is symmetrized on construction. ``extra`` carries estimator
    specific metadata (theta, delta, weight scheme, sync scheme, flags).
    """

    matrix: np.ndarray
    estimator_name: str
    kn_used: int = 0
    n_used: int = 0
    bias_corrected: bool = False
    psd_guaranteed: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("covariance matrix must be square")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return int(self.matrix.shape[0])

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_psd(self, rtol: float = 1e-12) -> bool:
        tr = float(np.trace(self.matrix))
        return self.min_eigenvalue() >= -rtol * abs(tr)


@dataclass(frozen=True)
class NoiseCovEstimate:
    """Estimated covariance matrix of the i.i.d. microstructure noise."""

    matrix: np.ndarray
    n_used: int

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        m = 0.5 * (m + m.T)
        if np.any(np.diag(m) < 0):
            raise ValueError("noise variances must be non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

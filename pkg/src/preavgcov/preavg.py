"""Pre-averaging weight functions, their constants and the pre-averaging
transform of a return matrix.

A weight function ``g`` lives on [0, 1] with ``g(0) = g(1) = 0``. From it
derive the lag functions

    phi1(s) = int_s^1 g'(u) g'(u - s) du,   phi2(s) = int_s^1 g(u) g(u - s) du,

the constants ``psi1 = phi1(0)``, ``psi2 = phi2(0)`` and the products
``Phi_ab = int_0^1 phi_a(s) phi_b(s) ds``. Estimators work with the
Riemann-sum versions of these at the window length ``kn`` actually used,
see :func:`finite_sample_constants`.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "WeightScheme",
    "FiniteSampleConstants",
    "make_min_weight",
    "make_power_weight",
    "make_sine_weight",
    "parse_weight",
    "finite_sample_constants",
    "preaveraged_returns",
    "preaveraged_from_levels",
]

_QUAD_OPTS = dict(epsabs=1e-14, epsrel=1e-12, limit=200)


def _on_unit(x, values):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0.0) & (x <= 1.0), values, 0.0)


@dataclass(frozen=True, eq=False)
class WeightScheme:
    """A pre-averaging weight function with its derived quantities.

    ``g`` and ``g_prime`` must accept numpy arrays and return zero outside
    [0, 1]. ``kinks`` lists interior points where ``g'`` is discontinuous;
    they are passed to the adaptive quadrature as breakpoints.
    ``closed_form`` optionally maps constant names (``psi1``, ``psi2``,
    ``Phi11``, ``Phi12``, ``Phi22``, ``psi_hy``) to exact values.
    """

    name: str
    g: Callable
    g_prime: Callable
    kinks: tuple = ()
    closed_form: dict = field(default_factory=dict)

    def __post_init__(self):
        ends = np.asarray(self.g(np.array([0.0, 1.0])), dtype=float)
        if np.max(np.abs(ends)) > 1e-14:
            raise ValueError(f"{self.name}: weight function must vanish at 0 and 1")
        if not self.psi2 > 0:
            raise ValueError(f"{self.name}: weight function must have positive L2 norm")

    def __repr__(self):
        return f"WeightScheme({self.name!r})"

    # lag functions -------------------------------------------------------

    def _breaks(self, s):
        pts = {k for k in self.kinks} | {s + k for k in self.kinks}
        return sorted(p for p in pts if s < p < 1.0)

    def phi1(self, s):
        """``int_s^1 g'(u) g'(u - s) du``, zero outside [0, 1]."""
        return self._lag_integral(s, self.g_prime)

    def phi2(self, s):
        """``int_s^1 g(u) g(u - s) du``, zero outside [0, 1]."""
        return self._lag_integral(s, self.g)

    def _lag_integral(self, s, f):
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros_like(s_arr)
        with warnings.catch_warnings():
            # near s = 1 the integrand is ~1e-16 and quad complains about roundoff
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for idx, sv in enumerate(s_arr):
                if 0.0 <= sv < 1.0:
                    out[idx] = integrate.quad(
                        lambda u: float(f(u) * f(u - sv)), sv, 1.0,
                        points=self._breaks(sv) or None, **_QUAD_OPTS)[0]
        return out if np.ndim(s) else float(out[0])

    def kernel(self, s):
        """The flat-top kernel ``phi2(s) / psi2`` implied by the weight."""
        return self.phi2(np.abs(s)) / self.psi2

    # asymptotic constants ------------------------------------------------

    @functools.cached_property
    def constants(self) -> dict:
        """``psi1, psi2, Phi11, Phi12, Phi22, psi_hy``; closed forms win."""
        vals = dict(self.closed_form)
        if "psi1" not in vals:
            vals["psi1"] = self._integral(lambda u: float(self.g_prime(u)) ** 2)
        if "psi2" not in vals:
            vals["psi2"] = self._integral(lambda u: float(self.g(u)) ** 2)
        if "psi_hy" not in vals:
            vals["psi_hy"] = self._integral(lambda u: float(self.g(u)))
        lag_points = sorted({abs(a - b) for a in self.kinks for b in self.kinks}
                            | set(self.kinks) | {1.0 - k for k in self.kinks})
        lag_points = [p for p in lag_points if 0.0 < p < 1.0] or None
        pairs = {"Phi11": (self.phi1, self.phi1),
                 "Phi12": (self.phi1, self.phi2),
                 "Phi22": (self.phi2, self.phi2)}
        for key, (fa, fb) in pairs.items():
            if key not in vals:
                vals[key] = integrate.quad(lambda s: fa(s) * fb(s), 0.0, 1.0,
                                           points=lag_points, **_QUAD_OPTS)[0]
        return vals

    def _integral(self, f):
        return integrate.quad(f, 0.0, 1.0, points=list(self.kinks) or None, **_QUAD_OPTS)[0]

    @property
    def psi1(self):
        return self.constants["psi1"]

    @property
    def psi2(self):
        if "psi2" in self.closed_form:
            return self.closed_form["psi2"]
        return self._integral(lambda u: float(self.g(u)) ** 2)

    @property
    def Phi11(self):
        return self.constants["Phi11"]

    @property
    def Phi12(self):
        return self.constants["Phi12"]

    @property
    def Phi22(self):
        return self.constants["Phi22"]

    @property
    def psi_hy(self):
        return self.constants["psi_hy"]


@functools.lru_cache(maxsize=None)
def make_min_weight() -> WeightScheme:
    """The triangular weight ``g(x) = min(x, 1 - x)``."""

    def g(x):
        x = np.asarray(x, dtype=float)
        return _on_unit(x, np.minimum(x, 1.0 - x))

    def g_prime(x):
        x = np.asarray(x, dtype=float)
        inside = (x > 0.0) & (x < 1.0)
        return np.where(inside, np.where(x < 0.5, 1.0, -1.0), 0.0)

    closed = dict(psi1=1.0, psi2=1.0 / 12.0, Phi11=1.0 / 6.0, Phi12=1.0 / 96.0,
                  Phi22=151.0 / 80640.0, psi_hy=0.25)
    return WeightScheme("min", g, g_prime, kinks=(0.5,), closed_form=closed)


@functools.lru_cache(maxsize=None)
def make_power_weight(a: int, b: int) -> WeightScheme:
    """``g(x) = x**a * (1 - x)**b`` for integers ``a, b >= 1``."""
    if int(a) != a or int(b) != b or a < 1 or b < 1:
        raise ValueError("power weight needs integer exponents a, b >= 1")
    a, b = int(a), int(b)

    def g(x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, 0.0, 1.0)
        return _on_unit(x, xc ** a * (1.0 - xc) ** b)

    def g_prime(x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, 0.0, 1.0)
        d = a * xc ** (a - 1) * (1.0 - xc) ** b - b * xc ** a * (1.0 - xc) ** (b - 1)
        return _on_unit(x, d)

    return WeightScheme(f"power({a},{b})", g, g_prime)


@functools.lru_cache(maxsize=None)
def make_sine_weight(c: int) -> WeightScheme:
    """``g(x) = sin(c * pi * x)`` for a positive integer ``c``."""
    if int(c) != c or c < 1:
        raise ValueError("sine weight needs a positive integer frequency")
    c = int(c)

    def g(x):
        x = np.asarray(x, dtype=float)
        # exact zeros at the end points instead of sin(pi) ~ 1e-16
        return _on_unit(x, np.where((x == 0.0) | (x == 1.0), 0.0, np.sin(c * math.pi * x)))

    def g_prime(x):
        x = np.asarray(x, dtype=float)
        return _on_unit(x, c * math.pi * np.cos(c * math.pi * x))

    return WeightScheme(f"sine({c})", g, g_prime)


def parse_weight(spec: str) -> WeightScheme:
    """Build a scheme from ``"min"``, ``"power:a,b"`` or ``"sine:c"``."""
    spec = spec.strip().lower()
    if spec == "min":
        return make_min_weight()
    kind, _, args = spec.partition(":")
    if kind == "power":
        a, b = (int(v) for v in args.split(","))
        return make_power_weight(a, b)
    if kind == "sine":
        return make_sine_weight(int(args or 1))
    raise ValueError(f"unknown weight function {spec!r}")


@dataclass(frozen=True)
class FiniteSampleConstants:
    """Riemann-sum versions of the weight constants at window ``kn``.

    ``phi1_kn[j]`` and ``phi2_kn[j]`` hold the lag sums for ``j = 0..kn-1``.
    """

    kn: int
    psi1_kn: float
    psi2_kn: float
    phi1_kn: np.ndarray
    phi2_kn: np.ndarray
    Phi11_kn: float
    Phi12_kn: float
    Phi22_kn: float
    psi_hy_kn: float


_FS_CACHE: dict = {}


def finite_sample_constants(scheme: WeightScheme, kn: int) -> FiniteSampleConstants:
    """Riemann approximations of the weight constants for window ``kn``.

    Results are memoized per ``(scheme, kn)``.
    """
    kn = int(kn)
    if kn < 2:
        raise ValueError("kn must be at least 2")
    key = (id(scheme), kn)
    hit = _FS_CACHE.get(key)
    if hit is not None and hit[0] is scheme:
        return hit[1]

    grid = scheme.g(np.arange(kn + 1) / kn)           # g(i/kn), i = 0..kn
    dg = np.diff(grid)                                 # g(i/kn) - g((i-1)/kn), i = 1..kn
    inner = grid[1:kn]                                 # g(i/kn), i = 1..kn-1

    psi1 = kn * float(np.dot(dg, dg))
    psi2 = float(np.dot(inner, inner)) / kn
    # lag-j autocorrelation sums, j = 0..kn-1
    phi1 = np.correlate(dg, dg, mode="full")[kn - 1:]
    phi2 = np.zeros(kn)
    phi2[: kn - 1] = np.correlate(inner, inner, mode="full")[kn - 2:]

    Phi11 = kn * (float(np.dot(phi1, phi1)) - 0.5 * phi1[0] ** 2)
    Phi12 = (float(np.dot(phi1, phi2)) - 0.5 * phi1[0] * phi2[0]) / kn
    Phi22 = (float(np.dot(phi2, phi2)) - 0.5 * phi2[0] ** 2) / kn ** 3
    psi_hy = float(np.sum(inner)) / kn

    phi1.setflags(write=False)
    phi2.setflags(write=False)
    out = FiniteSampleConstants(kn, psi1, psi2, phi1, phi2, Phi11, Phi12, Phi22, psi_hy)
    _FS_CACHE[key] = (scheme, out)
    return out


finite_sample_constants.cache_clear = _FS_CACHE.clear


def _as_matrix(x):
    a = np.asarray(x, dtype=float)
    return (a[:, None], True) if a.ndim == 1 else (a, False)


def preaveraged_returns(returns, kn: int, scheme: WeightScheme) -> np.ndarray:
    """Weighted moving sums ``sum_{j=1}^{kn-1} g(j/kn) r[i+j]``.

    Parameters
    ----------
    returns : array_like, shape (n,) or (n, d)
        Returns ``r[1..n]`` (row ``m`` of the array holds ``r[m+1]``).
    kn : int
        Window length.
    scheme : WeightScheme

    Returns
    -------
    numpy.ndarray, shape (n - kn + 2,) or (n - kn + 2, d)
        Row ``i`` holds the pre-averaged return starting after grid point i.
    """
    r, flat = _as_matrix(returns)
    n = r.shape[0]
    kn = int(kn)
    if kn < 2:
        raise ValueError("kn must be at least 2")
    if n < kn:
        raise ValueError(f"need n >= kn to pre-average (n={n}, kn={kn})")
    weights = scheme.g(np.arange(1, kn) / kn)
    rows = n - kn + 2
    out = np.zeros((rows, r.shape[1]))
    for j, w in enumerate(weights):
        if w != 0.0:
            out += w * r[j: j + rows]
    return out[:, 0] if flat else out


def preaveraged_from_levels(prices, kn: int, scheme: WeightScheme) -> np.ndarray:
    """Pre-averaged returns written in terms of price levels,
    ``-sum_{j=0}^{kn-1} (g((j+1)/kn) - g(j/kn)) Y[i+j]``.

    Algebraically identical to :func:`preaveraged_returns` applied to the
    differences of ``prices`` (``n + 1`` rows).
    """
    y, flat = _as_matrix(prices)
    n = y.shape[0] - 1
    kn = int(kn)
    if n < kn:
        raise ValueError(f"need n >= kn to pre-average (n={n}, kn={kn})")
    dg = np.diff(scheme.g(np.arange(kn + 1) / kn))
    rows = n - kn + 2
    out = np.zeros((rows, y.shape[1]))
    for j, w in enumerate(dg):
        out -= w * y[j: j + rows]
    return out[:, 0] if flat else out

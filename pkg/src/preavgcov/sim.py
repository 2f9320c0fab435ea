"""Monte Carlo laboratory: a stochastic volatility factor model observed with
noise at Poisson times, and an estimator bake-off reporting bias and rmse.

Model, per asset ``i``::

    dX_i = a_i dt + rho_i sigma_i dB_i + sqrt(1 - rho_i^2) sigma_i dW
    sigma_i = exp(beta0_i + beta1_i varrho_i),   dvarrho_i = alpha_i varrho_i dt + dB_i

``W`` is a common factor, ``B_i`` drives both the idiosyncratic price shock
and the log-volatility factor. Prices live on a grid of ``N`` steps per
session (one per second by default).

Random streams
--------------
Every replication owns a :class:`numpy.random.SeedSequence` spawned from the
master seed by replication counter, and every (asset, purpose) pair inside a
replication gets its own child stream. Noise draws are standard normals
scaled by ``omega`` and arrival times are standard exponentials scaled by
``lambda``, so scenarios that differ only in noise level or trading
intensity see common random numbers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .core import CovEstimate, PreAvgConfig, TickSeries
from .estimators import hy_classic, hy_preavg, mrc_balanced, mrc_psd, realised_cov
from .preavg import WeightScheme, finite_sample_constants, make_min_weight
from .sync import SyncSpec, previous_tick, refresh_time

__all__ = [
    "AssetParams",
    "SvModelConfig",
    "NoiseConfig",
    "PoissonSamplingConfig",
    "Scenario",
    "SimPaths",
    "TrueAvarOracle",
    "McCell",
    "McSummary",
    "simulate_varrho",
    "simulate_paths",
    "add_noise",
    "poisson_sample",
    "full_grid_series",
    "simulate_observations",
    "true_avar",
    "ESTIMATORS",
    "run_monte_carlo",
]

THREADS_ENV = "PREAVGCOV_WORKERS"


@dataclass(frozen=True)
class AssetParams:
    """Drift, volatility and leverage parameters of one asset."""

    drift: float = 0.03
    beta0: float = -5.0 / 16.0
    beta1: float = 1.0 / 8.0
    alpha: float = -1.0 / 40.0
    rho: float = -0.3

    def __post_init__(self):
        if not self.alpha < 0:
            raise ValueError("alpha must be negative (mean-reverting log-volatility)")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be below 1")


@dataclass(frozen=True)
class SvModelConfig:
    assets: tuple = (AssetParams(), AssetParams())
    grid_N: int = 23400
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "assets", tuple(self.assets))
        if len(self.assets) < 1:
            raise ValueError("need at least one asset")
        if self.grid_N < 2:
            raise ValueError("grid_N must be at least 2")

    @property
    def d(self) -> int:
        return len(self.assets)


@dataclass(frozen=True)
class NoiseConfig:
    """Noise level ``gamma^2``; the variance ``omega^2`` is set per path."""

    gamma_sq: float = 0.0

    def __post_init__(self):
        if self.gamma_sq < 0:
            raise ValueError("gamma_sq must be non-negative")


@dataclass(frozen=True)
class PoissonSamplingConfig:
    """Mean waiting times in seconds, one per asset."""

    lambdas: tuple
    session_seconds: int = 23400

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        if any(x < 1 for x in self.lambdas):
            raise ValueError("mean waiting times must be at least 1 second")


@dataclass(frozen=True)
class Scenario:
    """A (noise level, sampling intensity) cell. ``lambdas=None`` observes
    every asset at every grid point."""

    gamma_sq: float
    lambdas: Optional[tuple] = None

    def __post_init__(self):
        if self.lambdas is not None:
            object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))

    @property
    def label(self) -> str:
        lam = "full" if self.lambdas is None else ",".join(f"{x:g}" for x in self.lambdas)
        return f"gamma2={self.gamma_sq:g};lambda=({lam})"


# --------------------------------------------------------------------------
# path simulation


def simulate_varrho(config: SvModelConfig, i: int, rng: np.random.Generator,
                    z: Optional[np.ndarray] = None) -> np.ndarray:
    """Exact discretization of the log-volatility factor of asset ``i``.

    Parameters
    ----------
    config : SvModelConfig
    i : int
        Asset index.
    rng : numpy.random.Generator
        Source of the stationary initial value (and of ``z`` if omitted).
    z : ndarray, optional
        ``N`` standard normal innovations. Pass the ones that drive the
        asset's idiosyncratic price shock to get the perfect correlation
        between the two.

    Returns
    -------
    ndarray, shape (N + 1,)
    """
    p = config.assets[i]
    N = config.grid_N
    dt = 1.0 / N
    if z is None:
        z = rng.standard_normal(N)
    v0 = rng.standard_normal() / math.sqrt(-2.0 * p.alpha)
    phi = math.exp(p.alpha * dt)
    scale = math.sqrt(math.expm1(2.0 * p.alpha * dt) / (2.0 * p.alpha))
    # v[k+1] = phi v[k] + scale z[k]
    tail, _ = lfilter([scale], [1.0, -phi], z, zi=[phi * v0])
    return np.concatenate([[v0], tail])


@dataclass(frozen=True)
class SimPaths:
    """Efficient log-prices and spot volatilities on the grid ``j / N``.

    ``X`` and ``sigma`` have shape ``(N + 1, d)``; ``integrated_cov`` is the
    left-point Riemann sum of the spot covariance.
    """

    X: np.ndarray
    sigma: np.ndarray
    loadings: np.ndarray
    rhos: np.ndarray
    integrated_cov: np.ndarray

    @property
    def N(self) -> int:
        return self.X.shape[0] - 1

    def spot_cov(self) -> np.ndarray:
        """Spot covariance at the left points, shape ``(N, d, d)``."""
        s = self.sigma[:-1]
        common = self.loadings[None, :] * s
        out = common[:, :, None] * common[:, None, :]
        idio = (self.rhos[None, :] * s) ** 2
        idx = np.arange(s.shape[1])
        out[:, idx, idx] += idio
        return out


def simulate_paths(config: SvModelConfig, rng: np.random.Generator) -> SimPaths:
    """Euler paths of the factor model with exact log-volatility steps.

    ``rng`` is split into one child stream per asset plus one for the common
    factor, so adding an asset leaves the other assets' draws untouched.
    """
    N, d = config.grid_N, config.d
    dt = 1.0 / N
    streams = rng.spawn(d + 1)
    dW = math.sqrt(dt) * streams[d].standard_normal(N)
    X = np.zeros((N + 1, d))
    sigma = np.empty((N + 1, d))
    loadings = np.array([math.sqrt(1.0 - p.rho ** 2) for p in config.assets])
    rhos = np.array([p.rho for p in config.assets])
    for i, p in enumerate(config.assets):
        z = streams[i].standard_normal(N)
        varrho = simulate_varrho(config, i, streams[i], z)
        sigma[:, i] = np.exp(p.beta0 + p.beta1 * varrho)
        s = sigma[:-1, i]
        incr = p.drift * dt + s * (p.rho * math.sqrt(dt) * z + loadings[i] * dW)
        X[1:, i] = np.cumsum(incr)
    s = sigma[:-1]
    icov = (loadings[:, None] * loadings[None, :]) * (s.T @ s) / N
    icov[np.diag_indices(d)] = np.mean(s ** 2, axis=0)
    return SimPaths(X, sigma, loadings, rhos, icov)


def noise_variance(sigma: np.ndarray, noise: NoiseConfig) -> np.ndarray:
    """``omega^2 = gamma^2 sqrt(mean sigma^4)`` per asset (grid points 1..N)."""
    s = np.asarray(sigma)[1:]
    return noise.gamma_sq * np.sqrt(np.mean(s ** 4, axis=0))


def add_noise(X: np.ndarray, sigma: np.ndarray, noise: NoiseConfig,
              rng: np.random.Generator):
    """Observed prices ``Y = X + eps`` with Gaussian noise.

    Returns
    -------
    Y : ndarray
        Same shape as ``X``. Identical to ``X`` when ``gamma_sq == 0``.
    omega2 : ndarray
        Noise variance per asset.
    """
    X = np.asarray(X, dtype=float)
    flat = X.ndim == 1
    X2 = X[:, None] if flat else X
    omega2 = noise_variance(sigma if not flat else np.asarray(sigma)[:, None], noise)
    if noise.gamma_sq == 0.0:
        Y = X2.copy()
    else:
        streams = rng.spawn(X2.shape[1])
        eps = np.column_stack([s.standard_normal(X2.shape[0]) for s in streams])
        Y = X2 + np.sqrt(omega2)[None, :] * eps
    return (Y[:, 0], omega2[0]) if flat else (Y, omega2)


def poisson_sample(Y: np.ndarray, lam: float, rng: np.random.Generator,
                   asset_id: str = "0") -> TickSeries:
    """Observe a grid path at Poisson arrival times.

    Waiting times are exponential with mean ``lam`` grid steps; arrival
    times are rounded to the nearest grid index and repeated indices are
    kept once. The expected number of ticks is therefore about
    ``N (1 - exp(-1 / lam))``, somewhat below ``N / lam`` for small ``lam``.
    """
    if lam < 1:
        raise ValueError("mean waiting time must be at least 1")
    Y = np.asarray(Y, dtype=float)
    N = Y.size - 1
    chunk = int(N / lam * 1.2) + 64
    arrivals = np.empty(0)
    total = 0.0
    while total <= N:
        t = total + np.cumsum(rng.standard_exponential(chunk) * lam)
        arrivals = np.concatenate([arrivals, t])
        total = t[-1]
    idx = np.unique(np.rint(arrivals[arrivals <= N]).astype(np.int64))
    if idx.size < 2:
        raise ValueError(f"only {idx.size} observation(s) for mean waiting time {lam}")
    return TickSeries(asset_id, idx / N, Y[idx])


def full_grid_series(Y: np.ndarray) -> list:
    """Every asset observed at every grid point ``0, 1/N, ..., 1``."""
    Y = np.asarray(Y, dtype=float)
    N = Y.shape[0] - 1
    t = np.arange(N + 1) / N
    return [TickSeries(str(i), t, Y[:, i]) for i in range(Y.shape[1])]


def _rep_streams(master_seed: int, rep: int, d: int):
    """Path, noise and per-asset sampling generators of one replication."""
    root = np.random.SeedSequence(master_seed, spawn_key=(int(rep),))
    path_ss, noise_ss, sample_ss = root.spawn(3)
    return (np.random.Generator(np.random.PCG64(path_ss)),
            np.random.Generator(np.random.PCG64(noise_ss)),
            [np.random.Generator(np.random.PCG64(s)) for s in sample_ss.spawn(d)])


@dataclass(frozen=True)
class Observation:
    series: list
    paths: SimPaths
    omega2: np.ndarray
    Y: np.ndarray = field(repr=False)


def simulate_observations(model: SvModelConfig, scenario: Scenario, rep: int,
                          master_seed: Optional[int] = None,
                          paths: Optional[SimPaths] = None) -> Observation:
    """One replication of a scenario: paths, noise and observation times.

    ``paths`` may be passed to reuse the efficient prices of the same
    replication across scenarios.
    """
    seed = model.master_seed if master_seed is None else master_seed
    path_rng, noise_rng, sample_rngs = _rep_streams(seed, rep, model.d)
    if paths is None:
        paths = simulate_paths(model, path_rng)
    Y, omega2 = add_noise(paths.X, paths.sigma, NoiseConfig(scenario.gamma_sq), noise_rng)
    if scenario.lambdas is None:
        series = full_grid_series(Y)
    else:
        if len(scenario.lambdas) != model.d:
            raise ValueError("need one mean waiting time per asset")
        series = [poisson_sample(Y[:, i], lam, sample_rngs[i], str(i))
                  for i, lam in enumerate(scenario.lambdas)]
    return Observation(series, paths, omega2, Y)


# --------------------------------------------------------------------------
# asymptotic variance oracle


@dataclass(frozen=True)
class TrueAvarOracle:
    """Asymptotic covariance of ``vec(MRC)`` from known volatility paths.

    ``int_lambda``, ``int_theta`` and ``upsilon`` are the three
    ``d^2 x d^2`` building blocks; ``matrix`` their weighted sum.
    """

    matrix: np.ndarray
    int_lambda: np.ndarray
    int_theta: np.ndarray
    upsilon: np.ndarray
    theta: float


def _pair_products(a, b):
    """``out[(k,k'),(l,l')] = a[k,l] b[k',l']`` over a leading time axis,
    averaged, returned as a 4-d array indexed ``[k, k', l, l']``."""
    return np.einsum("tkl,tmn->kmln", a, b) / a.shape[0]


def true_avar(spot_cov: np.ndarray, psi: np.ndarray, theta: float,
              scheme: Optional[WeightScheme] = None, kn: Optional[int] = None
              ) -> TrueAvarOracle:
    """Evaluate the asymptotic covariance of the balanced MRC.

    Parameters
    ----------
    spot_cov : ndarray, shape (N, d, d) or (d, d)
        Spot covariance along the grid (a constant matrix is allowed).
    psi : ndarray, shape (d, d)
        Noise covariance.
    theta : float
    scheme : WeightScheme, optional
        Defaults to ``min(x, 1 - x)``.
    kn : int, optional
        Use the Riemann constants at this window instead of the limits.

    Notes
    -----
    With ``(k, k')`` and ``(l, l')`` the two vectorized positions::

        Lambda  = S[k,l] S[k',l'] + S[k,l'] S[k',l]
        Theta   = S[k,l] P[k',l'] + S[k,l'] P[l,k'] + S[l,k'] P[k,l'] + S[k',l'] P[k,l]
        Upsilon = P[k,l] P[k',l'] + P[k,l'] P[k',l]
    """
    scheme = scheme or make_min_weight()
    S = np.asarray(spot_cov, dtype=float)
    if S.ndim == 2:
        S = S[None]
    P = np.asarray(psi, dtype=float)
    d = S.shape[1]
    if P.shape != (d, d):
        raise ValueError("psi must be d x d")
    Pt = np.broadcast_to(P, S.shape)

    def swap(x):
        # [k, k', l, l'] -> the same array with l and l' exchanged
        return x.transpose(0, 1, 3, 2)

    ss = _pair_products(S, S)
    lam = ss + swap(ss)
    sp = _pair_products(S, Pt)     # S[k,l] P[k',l']
    ps = _pair_products(Pt, S)     # P[k,l] S[k',l']
    the = sp + swap(sp) + swap(ps) + ps
    pp = np.einsum("kl,mn->kmln", P, P)
    ups = pp + swap(pp)

    if kn is None:
        psi2, p11, p12, p22 = scheme.psi2, scheme.Phi11, scheme.Phi12, scheme.Phi22
    else:
        fs = finite_sample_constants(scheme, kn)
        psi2, p11, p12, p22 = fs.psi2_kn, fs.Phi11_kn, fs.Phi12_kn, fs.Phi22_kn
    dd = d * d
    lam, the, ups = (x.reshape(dd, dd) for x in (lam, the, ups))
    avar = 2.0 / psi2 ** 2 * (p22 * theta * lam + p12 / theta * the + p11 / theta ** 3 * ups)
    return TrueAvarOracle(avar, lam, the, ups, float(theta))


# --------------------------------------------------------------------------
# Monte Carlo


def _rv_rt(series, N):
    return realised_cov(refresh_time(series))


def _seconds_grid(seconds):
    def run(series, N):
        return realised_cov(previous_tick(series, SyncSpec("previous_tick", max(N // seconds, 2))))
    return run


def _mrc_rt(series, N):
    return mrc_balanced(refresh_time(series), PreAvgConfig(theta=1.0))


def _mrc_delta_rt(series, N):
    return mrc_psd(refresh_time(series), PreAvgConfig(theta=1.0, delta=0.1))


def _hy_preavg(series, N):
    return hy_preavg(series, PreAvgConfig(theta=1.0))


def _hy(series, N):
    d = len(series)
    m = np.empty((d, d))
    for k in range(d):
        for l in range(k, d):
            m[k, l] = m[l, k] = hy_classic(series[k], series[l])
    return CovEstimate(m, "hy", n_used=sum(s.count for s in series))


ESTIMATORS: Dict[str, Callable] = {
    "cov15m": _seconds_grid(900),
    "cov5m": _seconds_grid(300),
    "cov1m": _seconds_grid(60),
    "cov15s": _seconds_grid(15),
    "rv": _rv_rt,
    "mrc": _mrc_rt,
    "mrc_delta": _mrc_delta_rt,
    "hy_preavg": _hy_preavg,
    "hy": _hy,
}

TABLE1_ESTIMATORS = ("cov15m", "cov1m", "mrc", "mrc_delta", "hy_preavg")
TARGETS = ("cov", "corr", "beta")


def _targets(m, i=0, j=1):
    cov = m[i, j]
    corr = cov / math.sqrt(m[i, i] * m[j, j]) if m[i, i] > 0 and m[j, j] > 0 else math.nan
    beta = cov / m[i, i] if m[i, i] > 0 else math.nan
    return np.array([cov, corr, beta])


def _run_rep(args):
    """Errors of every (scenario, estimator) pair in one replication.

    Returns arrays of shape (n_scen, n_est, 3) for the errors and
    (n_scen, n_est) for sample sizes and the not-PSD flag; failed
    estimates are NaN.
    """
    model, scenarios, names, master_seed, rep = args
    ns, ne = len(scenarios), len(names)
    err = np.full((ns, ne, 3), np.nan)
    n_used = np.full((ns, ne), np.nan)
    not_psd = np.zeros((ns, ne), dtype=bool)
    paths = None
    for a, sc in enumerate(scenarios):
        try:
            obs = simulate_observations(model, sc, rep, master_seed, paths)
        except ValueError:
            # too few ticks: every estimator fails in this cell
            continue
        paths = obs.paths
        truth = _targets(paths.integrated_cov)
        for b, name in enumerate(names):
            try:
                est = ESTIMATORS[name](obs.series, model.grid_N)
            except (ValueError, FloatingPointError, np.linalg.LinAlgError):
                continue
            err[a, b] = _targets(est.matrix) - truth
            n_used[a, b] = est.n_used
            not_psd[a, b] = not est.is_psd()
    return err, n_used, not_psd


@dataclass(frozen=True)
class McCell:
    scenario: Scenario
    estimator: str
    target: str
    bias: float
    rmse: float
    se_bias: float
    reps: int
    failures: int
    mean_n: float
    psd_failures: int


@dataclass(frozen=True)
class McSummary:
    """Bias and rmse per (scenario, estimator, target) cell."""

    cells: tuple
    reps: int
    master_seed: int

    def cell(self, scenario: Scenario, estimator: str, target: str = "cov") -> McCell:
        for c in self.cells:
            if c.scenario == scenario and c.estimator == estimator and c.target == target:
                return c
        raise KeyError((scenario, estimator, target))

    def to_table(self, sep: str = "\t") -> str:
        """Delimited text: one panel per target, one row per scenario and a
        bias/rmse column pair per estimator."""
        scenarios = list(dict.fromkeys(c.scenario for c in self.cells))
        names = list(dict.fromkeys(c.estimator for c in self.cells))
        titles = {"cov": "A: integrated covariance", "corr": "B: integrated correlation",
                  "beta": "C: integrated beta"}
        lines = [f"# reps={self.reps} master_seed={self.master_seed}"]
        for t in TARGETS:
            lines.append(f"# panel {titles[t]}")
            lines.append(sep.join(["scenario"] + [f"{e}_{k}" for e in names for k in ("bias", "rmse")]))
            for sc in scenarios:
                row = [sc.label]
                for e in names:
                    c = self.cell(sc, e, t)
                    row += [f"{c.bias:.3f}", f"{c.rmse:.3f}"]
                lines.append(sep.join(row))
        return "\n".join(lines) + "\n"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_monte_carlo(scenarios: Sequence[Scenario], estimators: Sequence[str] = TABLE1_ESTIMATORS,
                    reps: int = 250, master_seed: int = 0,
                    model: Optional[SvModelConfig] = None,
                    workers: Optional[int] = None) -> McSummary:
    """Run the bake-off.

    Replication ``r`` always uses the same random streams, whatever the
    number of workers, and results are merged in replication order, so the
    summary is a function of ``master_seed`` alone.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    scenarios = tuple(scenarios)
    names = tuple(estimators)
    unknown = [e for e in names if e not in ESTIMATORS]
    if unknown:
        raise ValueError(f"unknown estimator(s) {unknown}; choose from {sorted(ESTIMATORS)}")
    model = model or SvModelConfig(master_seed=master_seed)
    jobs = [(model, scenarios, names, master_seed, r) for r in range(reps)]
    workers = workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_rep, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        results = [_run_rep(j) for j in jobs]
    err = np.stack([r[0] for r in results])
    n_used = np.stack([r[1] for r in results])
    not_psd = np.stack([r[2] for r in results])

    cells = []
    for a, sc in enumerate(scenarios):
        for b, name in enumerate(names):
            ok = np.all(np.isfinite(err[:, a, b]), axis=1)
            k = int(ok.sum())
            for t, target in enumerate(TARGETS):
                e = err[ok, a, b, t]
                bias = float(e.mean()) if k else math.nan
                rmse = float(math.sqrt(np.mean(e ** 2))) if k else math.nan
                se = float(e.std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan
                cells.append(McCell(sc, name, target, bias, rmse, se, k, reps - k,
                                    float(np.mean(n_used[ok, a, b])) if k else math.nan,
                                    int(not_psd[ok, a, b].sum())))
    return McSummary(tuple(cells), reps, master_seed)

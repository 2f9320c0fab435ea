"""Pre-averaging estimators of integrated covariance for noisy,
non-synchronous high-frequency prices."""

__version__ = "0.1.0"

from .core import (CovEstimate, KnClampWarning, NoiseCovEstimate, PreAvgConfig,
                   SyncedPanel, TickSeries, log_returns, resolve_kn)
from .estimators import (DerivedStats, KernelForm, SchemeReport, beta_of, corr_of,
                         hy_classic, hy_preavg, hy_preavg_pair, kernel_form_weights,
                         mrc_balanced, mrc_kernel_form, mrc_psd, noise_cov,
                         realised_cov, scheme_diagnostics)
from .inference import (AvarEstimate, ConfInterval, WeightTriple, avar_mrc,
                        build_weight_triple, ci_beta, ci_corr, ci_cov, default_triple,
                        integrated_quarticity, select_theta, theta_star, v_n)
from .preavg import (FiniteSampleConstants, WeightScheme, finite_sample_constants,
                     make_min_weight, make_power_weight, make_sine_weight, parse_weight,
                     preaveraged_from_levels, preaveraged_returns)
from .sync import SyncSpec, previous_tick, refresh_time, synchronize

__all__ = [
    "__version__",
    "CovEstimate",
    "KnClampWarning",
    "NoiseCovEstimate",
    "PreAvgConfig",
    "SyncedPanel",
    "TickSeries",
    "log_returns",
    "resolve_kn",
    "DerivedStats",
    "KernelForm",
    "SchemeReport",
    "beta_of",
    "corr_of",
    "hy_classic",
    "hy_preavg",
    "hy_preavg_pair",
    "kernel_form_weights",
    "mrc_balanced",
    "mrc_kernel_form",
    "mrc_psd",
    "noise_cov",
    "realised_cov",
    "scheme_diagnostics",
    "AvarEstimate",
    "ConfInterval",
    "WeightTriple",
    "avar_mrc",
    "build_weight_triple",
    "ci_beta",
    "ci_corr",
    "ci_cov",
    "default_triple",
    "integrated_quarticity",
    "select_theta",
    "theta_star",
    "v_n",
    "FiniteSampleConstants",
    "WeightScheme",
    "finite_sample_constants",
    "make_min_weight",
    "make_power_weight",
    "make_sine_weight",
    "parse_weight",
    "preaveraged_from_levels",
    "preaveraged_returns",
    "SyncSpec",
    "previous_tick",
    "refresh_time",
    "synchronize",
]

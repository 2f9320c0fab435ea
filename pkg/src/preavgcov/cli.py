"""Command-line entry point: ``preavgcov {clean,estimate,infer,simulate}``.

Reports are tab-delimited text preceded by a ``#`` block holding the fully
resolved configuration. Exit codes: 0 success (warnings go to stderr),
1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import itertools
import sys
import warnings
from typing import List, Optional

import numpy as np

from . import __version__
from .core import CovEstimate, KnClampWarning, PreAvgConfig, TickSeries
from .estimators import (beta_of, corr_of, hy_classic, hy_preavg, mrc_balanced,
                         mrc_psd, realised_cov)
from .inference import avar_mrc, build_weight_triple, ci_beta, ci_corr, ci_cov
from .ingest import (DEFAULT_SESSION, clean_quotes, clean_trades, read_quotes_csv,
                     read_tick_series, read_trades_csv, write_tick_series)
from .preavg import parse_weight
from .sim import ESTIMATORS, THREADS_ENV, Scenario, run_monte_carlo
from .sync import SyncSpec, synchronize

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ESTIMATOR_CHOICES = ("rv", "mrc", "mrc-psd", "hy", "hy-preavg")
TABLE1_GAMMAS = (0.0, 0.001, 0.01)
TABLE1_LAMBDAS = (3, 5, 10, 30, 60)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# argument helpers


def _parse_sync(text: str) -> SyncSpec:
    if text == "refresh":
        return SyncSpec("refresh_time")
    if text.startswith("calendar:"):
        try:
            n = int(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad calendar grid in --sync {text!r}") from None
        if n < 2:
            raise UsageError("--sync calendar:N needs N >= 2")
        return SyncSpec("previous_tick", n)
    raise UsageError(f"--sync must be 'refresh' or 'calendar:N', got {text!r}")


def _parse_scenario(text: str) -> Scenario:
    """``gamma2=0.001,lambda=3`` (second asset twice as slow),
    ``lambda=3:6`` or ``lambda=full``."""
    vals = {}
    for part in text.split(","):
        key, _, val = part.partition("=")
        vals[key.strip()] = val.strip()
    if set(vals) - {"gamma2", "lambda"} or "gamma2" not in vals or "lambda" not in vals:
        raise UsageError(f"scenario {text!r}: expected gamma2=<x>,lambda=<l>[:<l2>|full]")
    try:
        g = float(vals["gamma2"])
        lam = vals["lambda"]
        if lam == "full":
            lambdas = None
        elif ":" in lam:
            lambdas = tuple(float(x) for x in lam.split(":"))
        else:
            lambdas = (float(lam), 2.0 * float(lam))
        return Scenario(g, lambdas)
    except ValueError as exc:
        raise UsageError(f"scenario {text!r}: {exc}") from None


def _parse_session(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError("--session expects OPEN,CLOSE")
    return tuple(p.strip() for p in parts)


def _fmt(x) -> str:
    return repr(float(x))


def _config_block(title: str, items: dict) -> List[str]:
    lines = [f"# preavgcov {__version__} {title}"]
    lines += [f"# {k}={v}" for k, v in items.items()]
    return lines


def _emit(lines: List[str], path: Optional[str]) -> None:
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# estimate / infer


def _load_series(paths):
    try:
        series = [read_tick_series(p) for p in paths]
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from None
    ids = [s.asset_id for s in series]
    if len(set(ids)) != len(ids):
        # fall back to positional names so the report stays unambiguous
        series = [TickSeries(f"{s.asset_id}#{k}", s.times, s.log_prices) for k, s in enumerate(series)]
    return series


def _weight(text):
    try:
        return parse_weight(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _estimate(args, series):
    """Run the selected estimator; returns (estimate, panel or None, resolved config)."""
    scheme = _weight(args.weight)
    resolved = {"estimator": args.estimator, "weight": scheme.name, "theta": args.theta}
    panel = None
    if args.estimator in ("rv", "mrc", "mrc-psd"):
        spec = _parse_sync(args.sync)
        try:
            panel = synchronize(series, spec)
        except ValueError as exc:
            raise DataError(f"synchronization failed: {exc}") from None
        resolved["sync"] = spec.method + (f":{spec.calendar_n}" if spec.calendar_n else "")
    else:
        resolved["sync"] = "none (tick level)"
    delta = args.delta
    if args.estimator == "mrc-psd" and delta is None:
        delta = 0.1
    if args.estimator != "mrc-psd" and delta not in (None, 0.0):
        raise UsageError("--delta > 0 is only valid with --estimator mrc-psd")
    if args.estimator == "mrc-psd" and not 0 < delta < 0.5:
        raise UsageError("--delta must lie in (0, 1/2) for mrc-psd")
    resolved["delta"] = delta or 0.0
    cfg = PreAvgConfig(theta=args.theta, delta=delta or 0.0, explicit_kn=args.kn)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", KnClampWarning)
            if args.estimator == "rv":
                est = realised_cov(panel)
            elif args.estimator == "mrc":
                est = mrc_balanced(panel, cfg, scheme)
            elif args.estimator == "mrc-psd":
                est = mrc_psd(panel, cfg, scheme)
            elif args.estimator == "hy-preavg":
                est = hy_preavg(series, cfg, scheme)
            else:
                d = len(series)
                m = np.empty((d, d))
                for k, l in itertools.combinations_with_replacement(range(d), 2):
                    m[k, l] = m[l, k] = hy_classic(series[k], series[l])
                est = CovEstimate(m, "hy", n_used=sum(s.count for s in series))
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except ValueError as exc:
        raise DataError(f"estimation failed: {exc}") from None
    if not np.all(np.isfinite(est.matrix)):
        raise NumericalError("estimate contains non-finite entries")
    resolved.update(kn=est.kn_used, n=est.n_used)
    return est, panel, cfg, resolved


def _estimate_lines(est, series):
    lines = ["section\ti\tj\tvalue"]
    d = est.d
    names = [s.asset_id for s in series]
    for i in range(d):
        for j in range(d):
            lines.append(f"cov\t{names[i]}\t{names[j]}\t{_fmt(est.matrix[i, j])}")
    for i, j in itertools.permutations(range(d), 2):
        try:
            lines.append(f"beta\t{names[i]}\t{names[j]}\t{_fmt(beta_of(est, i, j).beta)}")
        except ValueError:
            lines.append(f"beta\t{names[i]}\t{names[j]}\tnan")
    for i, j in itertools.combinations(range(d), 2):
        try:
            lines.append(f"corr\t{names[i]}\t{names[j]}\t{_fmt(corr_of(est, i, j).corr)}")
        except ValueError:
            lines.append(f"corr\t{names[i]}\t{names[j]}\tnan")
    lines.append(f"psd\t-\t-\t{str(est.is_psd()).lower()}")
    return lines


def _interval_lines(est, panel, cfg, args, series):
    names = [s.asset_id for s in series]
    weights = [_weight(w.strip()) for w in args.triple.split(";")]
    if len(weights) != 3:
        raise UsageError("--triple expects three ';'-separated weights")
    try:
        triple = build_weight_triple(*weights, g0=_weight(args.weight))
    except ValueError as exc:
        raise NumericalError(str(exc)) from None
    try:
        avar = avar_mrc(panel, cfg, triple)
    except ValueError as exc:
        raise NumericalError(f"avar estimation failed: {exc}") from None
    lines = ["ci\tkind\ti\tj\tpoint\thalf_width\tlower\tupper\tlevel\tvalid"]
    d = est.d
    rows = []
    for i, j in itertools.combinations_with_replacement(range(d), 2):
        rows.append(("covariance", i, j, ci_cov))
    for i, j in itertools.permutations(range(d), 2):
        rows.append(("beta", i, j, ci_beta))
    for i, j in itertools.combinations(range(d), 2):
        rows.append(("correlation", i, j, ci_corr))
    for kind, i, j, fn in rows:
        try:
            ci = fn(est, avar, i, j, args.level)
        except ValueError as exc:
            raise NumericalError(f"{kind} interval for ({names[i]}, {names[j]}): {exc}") from None
        if not ci.valid:
            print(f"warning: negative variance estimate for {kind} ({names[i]}, {names[j]}); "
                  "interval flagged invalid", file=sys.stderr)
        lines.append("\t".join(["ci", kind, names[i], names[j], _fmt(ci.point), _fmt(ci.half_width),
                                _fmt(ci.lower), _fmt(ci.upper), _fmt(ci.level),
                                str(ci.valid).lower()]))
    return lines, triple


def cmd_estimate(args) -> int:
    if args.infer and args.estimator != "mrc":
        raise UsageError("--infer requires --estimator mrc")
    series = _load_series(args.inputs)
    est, panel, cfg, resolved = _estimate(args, series)
    extra_lines = []
    if args.infer:
        extra_lines, triple = _interval_lines(est, panel, cfg, args, series)
        resolved.update(level=args.level, triple=";".join(triple.names))
    resolved["inputs"] = ",".join(args.inputs)
    lines = _config_block("estimate", resolved) + _estimate_lines(est, series) + extra_lines
    _emit(lines, args.output)
    return EXIT_OK


def cmd_infer(args) -> int:
    if args.estimator != "mrc":
        raise UsageError("infer requires --estimator mrc")
    series = _load_series(args.inputs)
    est, panel, cfg, resolved = _estimate(args, series)
    lines, triple = _interval_lines(est, panel, cfg, args, series)
    resolved.update(level=args.level, triple=";".join(triple.names), inputs=",".join(args.inputs))
    _emit(_config_block("infer", resolved) + lines, args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# clean / simulate


def cmd_clean(args) -> int:
    session = _parse_session(args.session)
    if bool(args.trades) == bool(args.quotes):
        raise UsageError("give exactly one of --trades or --quotes")
    try:
        if args.trades:
            recs = read_trades_csv(args.trades)
            series, report = clean_trades(recs, session, args.exchange, args.asset_id or "trades")
        else:
            recs = read_quotes_csv(args.quotes)
            series, report = clean_quotes(recs, session, args.exchange, args.asset_id or "quotes")
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from None
    write_tick_series(args.output, series)
    header = _config_block("clean", {"input": args.trades or args.quotes,
                                     "exchange": args.exchange or "*",
                                     "session": ",".join(session), "output": args.output})
    text = "\n".join(header) + "\n" + report.to_text()
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    if args.scenario:
        scenarios = [_parse_scenario(s) for s in args.scenario]
    else:
        scenarios = [Scenario(g, (lam, 2.0 * lam)) for g in TABLE1_GAMMAS for lam in TABLE1_LAMBDAS]
    names = [e.strip() for e in args.estimators.split(",") if e.strip()]
    unknown = [e for e in names if e not in ESTIMATORS]
    if unknown:
        raise UsageError(f"unknown estimator(s) {unknown}; choose from {sorted(ESTIMATORS)}")
    try:
        summary = run_monte_carlo(scenarios, names, args.reps, args.seed, workers=args.workers)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    header = _config_block("simulate", {"reps": args.reps, "seed": args.seed,
                                        "estimators": ",".join(names),
                                        "scenarios": ";".join(s.label for s in scenarios)})
    failures = sum(c.failures for c in summary.cells if c.target == "cov")
    if failures:
        print(f"warning: {failures} estimator failure(s) excluded from the summary", file=sys.stderr)
    _emit(header + [summary.to_table().rstrip("\n")], args.output)
    return EXIT_OK


# --------------------------------------------------------------------------


def _add_estimation_flags(p, default_estimator):
    p.add_argument("inputs", nargs="+", help="tick series files (time_fraction,log_price)")
    p.add_argument("--estimator", choices=ESTIMATOR_CHOICES, default=default_estimator)
    p.add_argument("--sync", default="refresh", help="'refresh' or 'calendar:N' (default refresh)")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=None,
                   help="window exponent offset, mrc-psd only (default 0.1)")
    p.add_argument("--kn", type=int, default=None, help="explicit window length")
    p.add_argument("--weight", default="min", help="min | power:a,b | sine:c")
    p.add_argument("--triple", default="min;sine:1;sine:2",
                   help="three ';'-separated weights for the avar estimate")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("-o", "--output", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="preavgcov", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("clean", help="filter a trade or quote file into a tick series")
    p.add_argument("--trades")
    p.add_argument("--quotes")
    p.add_argument("--exchange", default=None)
    p.add_argument("--session", default=",".join(DEFAULT_SESSION))
    p.add_argument("--asset-id", default=None)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("estimate", help="integrated covariance of tick series")
    _add_estimation_flags(p, "mrc")
    p.add_argument("--infer", action="store_true", help="append confidence intervals (mrc only)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("infer", help="confidence intervals from the balanced MRC")
    _add_estimation_flags(p, "mrc")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="Monte Carlo bias/rmse table")
    p.add_argument("--reps", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", action="append",
                   help="gamma2=<x>,lambda=<l>[:<l2>|full]; repeatable (default: full grid)")
    p.add_argument("--estimators", default="cov15m,cov1m,mrc,mrc_delta,hy_preavg")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default ${THREADS_ENV} or 1)")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "level", 0.5) is not None and not 0 < getattr(args, "level", 0.5) < 1:
            raise UsageError("--level must lie in (0, 1)")
        if getattr(args, "theta", 1.0) is not None and not getattr(args, "theta", 1.0) > 0:
            raise UsageError("--theta must be positive")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

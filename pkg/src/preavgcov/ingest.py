"""Trade and quote cleaning.

Rows are screened by a fixed sequence of rules and every deleted row is
charged to the first rule that rejects it, so the report always satisfies
``input = output + deletions + aggregated``. Rows sharing a timestamp are
merged last, by size-weighted averaging.

Wire format is comma-separated text with a header row::

    trades: timestamp,price,size,exch,corr,cond
    quotes: timestamp,bid,ask,bsize,asize,exch

with ``HH:MM:SS`` timestamps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import TickSeries

__all__ = [
    "RawTickRecord",
    "CleaningReport",
    "parse_clock",
    "read_trades_csv",
    "read_quotes_csv",
    "clean_trades",
    "clean_quotes",
    "noise_ratio",
    "write_tick_series",
    "read_tick_series",
    "DEFAULT_SESSION",
    "DEFAULT_ALLOWED_CONDITIONS",
]

DEFAULT_SESSION = ("09:30:00", "16:00:00")
DEFAULT_ALLOWED_CONDITIONS = frozenset({"", "@", "E", "F"})
WIDE_SPREAD_MULTIPLE = 10.0

TRADE_FIELDS = ("timestamp", "price", "size", "exch", "corr", "cond")
QUOTE_FIELDS = ("timestamp", "bid", "ask", "bsize", "asize", "exch")
TRADE_RULES = ("exchange", "session", "zero_price", "correction_abnormal")
QUOTE_RULES = ("exchange", "session", "zero_price", "negative_spread", "wide_spread")


def parse_clock(text: str) -> int:
    """``HH:MM:SS`` to seconds after midnight."""
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ValueError(f"timestamp {text!r} is not HH:MM:SS")
    h, m, s = (int(p) for p in parts)
    if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60):
        raise ValueError(f"timestamp {text!r} out of range")
    return 3600 * h + 60 * m + s


@dataclass(frozen=True)
class RawTickRecord:
    """One row of a trade or quote file (``kind`` is ``trade`` or ``quote``)."""

    timestamp: int
    kind: str
    exchange: str
    price: float = math.nan
    size: float = 0.0
    bid: float = math.nan
    ask: float = math.nan
    bid_size: float = 0.0
    ask_size: float = 0.0
    correction_indicator: int = 0
    sale_condition: str = ""

    def __post_init__(self):
        if self.kind not in ("trade", "quote"):
            raise ValueError(f"unknown record kind {self.kind!r}")
        sizes = (self.size, self.bid_size, self.ask_size)
        if any(s < 0 or math.isnan(s) for s in sizes):
            raise ValueError("sizes must be non-negative")


def _read_rows(path, fields):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in fields if f not in (reader.fieldnames or ())]
        if missing:
            raise ValueError(f"{path}: missing column(s) {missing}")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def read_trades_csv(path) -> List[RawTickRecord]:
    out = []
    for lineno, row in _read_rows(path, TRADE_FIELDS):
        try:
            out.append(RawTickRecord(
                parse_clock(row["timestamp"]), "trade", row["exch"].strip(),
                price=float(row["price"]), size=float(row["size"]),
                correction_indicator=int(row["corr"] or 0),
                sale_condition=(row["cond"] or "").strip()))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def read_quotes_csv(path) -> List[RawTickRecord]:
    out = []
    for lineno, row in _read_rows(path, QUOTE_FIELDS):
        try:
            out.append(RawTickRecord(
                parse_clock(row["timestamp"]), "quote", row["exch"].strip(),
                bid=float(row["bid"]), ask=float(row["ask"]),
                bid_size=float(row["bsize"]), ask_size=float(row["asize"])))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


@dataclass(frozen=True)
class CleaningReport:
    """Row accounting of one cleaning run.

    ``deletions`` maps rule name to the number of rows it removed;
    ``aggregated`` counts rows absorbed into another row with the same
    timestamp.
    """

    kind: str
    input_count: int
    output_count: int
    deletions: dict = field(default_factory=dict)
    aggregated: int = 0

    def balanced(self) -> bool:
        return self.input_count == self.output_count + sum(self.deletions.values()) + self.aggregated

    def to_text(self) -> str:
        lines = [f"kind={self.kind}", f"input={self.input_count}"]
        lines += [f"deleted.{k}={v}" for k, v in self.deletions.items()]
        lines += [f"aggregated={self.aggregated}", f"output={self.output_count}"]
        return "\n".join(lines) + "\n"


def _session_bounds(session):
    lo, hi = (parse_clock(x) if isinstance(x, str) else int(x) for x in session)
    if hi <= lo:
        raise ValueError("session close must be after open")
    return lo, hi


def _screen(records, rules, order):
    """Apply record-level rules in ``order``; return kept records and counts."""
    order = tuple(order or rules)
    if sorted(order) != sorted(rules):
        raise ValueError(f"rule order must be a permutation of {rules}")
    counts = {r: 0 for r in order}
    kept = []
    for rec in records:
        for name in order:
            if rules[name](rec):
                counts[name] += 1
                break
        else:
            kept.append(rec)
    return kept, counts


def _aggregate(times, values, weights):
    """Weighted mean of ``values`` per distinct time (plain mean if the
    weights of a time sum to zero)."""
    uniq, inv = np.unique(times, return_inverse=True)
    w = np.bincount(inv, weights=weights, minlength=uniq.size)
    wv = np.bincount(inv, weights=weights * values, minlength=uniq.size)
    cnt = np.bincount(inv, minlength=uniq.size)
    plain = np.bincount(inv, weights=values, minlength=uniq.size) / cnt
    out = np.where(w > 0, wv / np.where(w > 0, w, 1.0), plain)
    return uniq, out


def _to_series(asset_id, secs, log_prices, lo, hi):
    if secs.size < 2:
        raise ValueError(f"{asset_id}: {secs.size} observation(s) left after cleaning, need 2")
    return TickSeries(asset_id, (secs - lo) / (hi - lo), log_prices)


def clean_trades(records: Iterable[RawTickRecord], session=DEFAULT_SESSION,
                 exchange: Optional[str] = None, asset_id: str = "trades",
                 allowed_conditions=DEFAULT_ALLOWED_CONDITIONS,
                 rule_order: Optional[Sequence[str]] = None) -> Tuple[TickSeries, CleaningReport]:
    """Filter trades and merge same-second prints into volume-weighted prices.

    Parameters
    ----------
    records : iterable of RawTickRecord
    session : pair of ``HH:MM:SS`` strings or seconds after midnight
        Inclusive trading hours.
    exchange : str, optional
        Exchange code to keep; ``None`` keeps every exchange.
    allowed_conditions : set of str
        Sale conditions treated as regular.
    rule_order : sequence of str, optional
        Order in which the row rules are tried (it only changes which rule
        a row is charged to).

    Returns
    -------
    TickSeries, CleaningReport
    """
    records = list(records)
    lo, hi = _session_bounds(session)
    allowed = frozenset(allowed_conditions)
    rules = {
        "exchange": lambda r: exchange is not None and r.exchange != exchange,
        "session": lambda r: not lo <= r.timestamp <= hi,
        "zero_price": lambda r: not r.price > 0,
        "correction_abnormal": lambda r: r.correction_indicator != 0 or r.sale_condition not in allowed,
    }
    kept, counts = _screen(records, rules, rule_order)
    if not kept:
        raise ValueError(f"{asset_id}: no trades left after filtering")
    secs = np.array([r.timestamp for r in kept], dtype=float)
    price = np.array([r.price for r in kept])
    size = np.array([r.size for r in kept])
    t, vwap = _aggregate(secs, price, size)
    report = CleaningReport("trade", len(records), int(t.size), counts, len(kept) - int(t.size))
    return _to_series(asset_id, t, np.log(vwap), lo, hi), report


def clean_quotes(records: Iterable[RawTickRecord], session=DEFAULT_SESSION,
                 exchange: Optional[str] = None, asset_id: str = "quotes",
                 rule_order: Optional[Sequence[str]] = None) -> Tuple[TickSeries, CleaningReport]:
    """Filter quotes and return the log mid-quote series.

    Rows with a zero bid or ask, a negative spread, or a spread above ten
    times the median spread of the rows surviving the other rules are
    dropped. Same-second quotes are merged by size-weighting each side.
    """
    records = list(records)
    lo, hi = _session_bounds(session)
    rules = {
        "exchange": lambda r: exchange is not None and r.exchange != exchange,
        "session": lambda r: not lo <= r.timestamp <= hi,
        "zero_price": lambda r: not (r.bid > 0 and r.ask > 0),
        "negative_spread": lambda r: r.ask < r.bid,
    }
    order = tuple(rule_order or QUOTE_RULES)
    if sorted(order) != sorted(QUOTE_RULES):
        raise ValueError(f"rule order must be a permutation of {QUOTE_RULES}")
    # the wide-spread rule needs the median of the otherwise clean rows,
    # so it is always evaluated after the others
    row_order = tuple(r for r in order if r != "wide_spread")
    kept, counts = _screen(records, rules, row_order)
    counts["wide_spread"] = 0
    if kept:
        spread = np.array([r.ask - r.bid for r in kept])
        limit = WIDE_SPREAD_MULTIPLE * float(np.median(spread))
        wide = spread > limit
        counts["wide_spread"] = int(wide.sum())
        kept = [r for r, w in zip(kept, wide) if not w]
    if not kept:
        raise ValueError(f"{asset_id}: no quotes left after filtering")
    secs = np.array([r.timestamp for r in kept], dtype=float)
    t, bid = _aggregate(secs, np.array([r.bid for r in kept]), np.array([r.bid_size for r in kept]))
    _, ask = _aggregate(secs, np.array([r.ask for r in kept]), np.array([r.ask_size for r in kept]))
    counts = {k: counts[k] for k in QUOTE_RULES}
    report = CleaningReport("quote", len(records), int(t.size), counts, len(kept) - int(t.size))
    return _to_series(asset_id, t, np.log(0.5 * (bid + ask)), lo, hi), report


def noise_ratio(series: TickSeries, sparse_n: int = 78) -> float:
    """Noise-to-signal diagnostic ``sqrt(n omega^2 / IV)``.

    ``IV`` is the realised variance on a previous-tick grid of ``sparse_n``
    intervals and ``omega^2 = max(RV - IV, 0) / (2 n)`` the noise variance
    implied by the excess of the full-frequency realised variance ``RV``
    over ``IV``; ``n`` is the number of full-frequency returns.

    Raises
    ------
    ValueError
        If the series is too short or the sparse realised variance is not
        positive.
    """
    n = series.count - 1
    if not 2 <= sparse_n < n:
        raise ValueError(f"need 2 <= sparse_n < n (sparse_n={sparse_n}, n={n})")
    r = np.diff(series.log_prices)
    rv = float(r @ r)
    grid = np.arange(sparse_n + 1) / sparse_n
    idx = np.searchsorted(series.times, grid, side="right") - 1
    sampled = series.log_prices[idx[idx >= 0]]
    iv = float(np.sum(np.diff(sampled) ** 2))
    if not iv > 0:
        raise ValueError("sparse realised variance is zero; noise ratio undefined")
    omega2 = max(rv - iv, 0.0) / (2.0 * n)
    return math.sqrt(n * omega2 / iv)


def write_tick_series(path, series: TickSeries) -> None:
    """Write ``time_fraction,log_price`` rows under an ``# asset_id=`` line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# asset_id={series.asset_id}\n")
        w = csv.writer(fh)
        w.writerow(["time_fraction", "log_price"])
        for t, p in zip(series.times, series.log_prices):
            w.writerow([repr(float(t)), repr(float(p))])


def read_tick_series(path, asset_id: Optional[str] = None) -> TickSeries:
    """Read a file written by :func:`write_tick_series`."""
    name = asset_id
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key.strip() == "asset_id" and name is None:
                    name = val.strip()
                continue
            if line.startswith("time_fraction"):
                continue
            try:
                t, p = line.split(",")
                rows.append((float(t), float(p)))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected 'time_fraction,log_price'") from None
    if not rows:
        raise ValueError(f"{path}: no observations")
    arr = np.array(rows)
    return TickSeries(name or Path(path).stem, arr[:, 0], arr[:, 1])

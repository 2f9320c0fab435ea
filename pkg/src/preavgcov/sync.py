"""Map non-synchronous tick series onto a common grid.

Only last-tick imputation is offered: each grid point takes the most recent
observed price at or before it. Interpolation is deliberately absent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import SyncedPanel, TickSeries

__all__ = ["SyncSpec", "refresh_time", "previous_tick", "synchronize"]


@dataclass(frozen=True)
class SyncSpec:
    """How to synchronize.

    ``method`` is ``"refresh_time"`` or ``"previous_tick"``. ``calendar_n``
    is the number of grid intervals for previous-tick sampling (390 gives
    1-minute returns over a 6.5 hour session). With ``include_open`` the
    grid point at time 0 takes each asset's first observed price instead
    of being trimmed when some asset has not traded yet.
    """

    method: str = "refresh_time"
    calendar_n: Optional[int] = None
    include_open: bool = False

    def __post_init__(self):
        if self.method not in ("refresh_time", "previous_tick"):
            raise ValueError(f"unknown sync method {self.method!r}")
        if self.method == "previous_tick" and (self.calendar_n is None or self.calendar_n < 2):
            raise ValueError("previous_tick needs calendar_n >= 2")


def _last_at_or_before(s: TickSeries, t):
    """Index of the last tick at or before each time in ``t`` (-1 if none)."""
    return np.searchsorted(s.times, t, side="right") - 1


def refresh_time(series: Sequence[TickSeries]) -> SyncedPanel:
    """All-asset refresh-time sampling.

    The first grid time is the latest first observation across assets;
    each following one is the latest, across assets, of the first
    observation strictly after the previous grid time. Sampling stops
    when any asset has no further observation. Every asset contributes its
    last price at or before each grid time.
    """
    series = list(series)
    if len(series) < 2:
        raise ValueError("refresh time needs at least two series")
    times = [s.times for s in series]
    grid = []
    tau = max(t[0] for t in times)
    while True:
        grid.append(tau)
        nxt = -np.inf
        for t in times:
            p = int(np.searchsorted(t, tau, side="right"))
            if p >= t.size:
                nxt = None
                break
            nxt = max(nxt, t[p])
        if nxt is None:
            break
        tau = nxt
    grid = np.asarray(grid)
    if grid.size < 2:
        raise ValueError("fewer than 2 refresh times")
    prices = np.column_stack([s.log_prices[_last_at_or_before(s, grid)] for s in series])
    return SyncedPanel(grid, prices, "refresh_time", tuple(s.asset_id for s in series))


def previous_tick(series: Sequence[TickSeries], spec: SyncSpec) -> SyncedPanel:
    """Previous-tick sampling on the uniform grid ``i / calendar_n``.

    Leading grid points at which some asset has not yet traded are trimmed
    (no back-filling) unless ``spec.include_open`` is set, in which case
    only the opening point uses first observed prices.
    """
    series = list(series)
    if spec.calendar_n is None or spec.calendar_n < 2:
        raise ValueError("previous_tick needs calendar_n >= 2")
    grid = np.arange(spec.calendar_n + 1) / spec.calendar_n
    idx = np.column_stack([_last_at_or_before(s, grid) for s in series])
    if spec.include_open:
        idx[0] = np.maximum(idx[0], 0)
    keep = np.all(idx >= 0, axis=1)
    first = int(np.argmax(keep)) if keep.any() else grid.size
    grid, idx = grid[first:], idx[first:]
    if grid.size < 2:
        raise ValueError("previous-tick grid has fewer than 2 usable points")
    prices = np.column_stack([s.log_prices[idx[:, k]] for k, s in enumerate(series)])
    return SyncedPanel(grid, prices, "calendar", tuple(s.asset_id for s in series))


def synchronize(series: Sequence[TickSeries], spec: SyncSpec) -> SyncedPanel:
    if spec.method == "refresh_time":
        return refresh_time(series)
    return previous_tick(series, spec)

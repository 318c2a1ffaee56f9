"""Daily sentiment aggregation and Jensen alpha/beta memory weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import ScoredMessage, WeightMode, WeightPolicy

__all__ = [
    "MarketDay", "WeightPolicy", "WeightMode", "DegenerateMarketError",
    "aggregate_day", "beta_market", "jensen_alpha", "weights", "weight_series",
]

DEGENERATE_RETURN = 1e-6
DEGENERATE_VAR = 1e-12


class DegenerateMarketError(ValueError):
    """Market returns have (numerically) zero variance over the window."""


@dataclass(frozen=True)
class MarketDay:
    day_index: int
    r_asset: float
    r_market: float
    r_free: float = 0.0

    def __post_init__(self):
        if not np.isfinite([self.r_asset, self.r_market, self.r_free]).all():
            raise ValueError(f"non-finite market day {self}")


def aggregate_day(messages: Iterable[ScoredMessage]) -> tuple[float, float]:
    """Confidence-weighted sentiment sum and mean neutral noise for one day.

    An empty day carries no signal and full noise: ``(0.0, 1.0)``.
    """
    messages = list(messages)
    if not messages:
        return 0.0, 1.0
    s = sum((1.0 - m.neutral) * m.compound for m in messages)
    e = sum(m.neutral for m in messages) / len(messages)
    return s, e


def beta_market(history: Sequence[MarketDay], window: int) -> float:
    """Sample beta of the asset against the market over the trailing ``window`` days."""
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(history) < window:
        raise ValueError(f"need {window} days of history, got {len(history)}")
    tail = history[-window:]
    ra = np.array([d.r_asset for d in tail])
    rm = np.array([d.r_market for d in tail])
    dm = rm - rm.mean()
    var = dm @ dm / (window - 1)
    if var < DEGENERATE_VAR:
        raise DegenerateMarketError(f"market variance {var:.3g} over {window} days")
    cov = (ra - ra.mean()) @ dm / (window - 1)
    return float(cov / var)


def jensen_alpha(day: MarketDay, beta: float) -> float:
    return day.r_asset - (day.r_free + beta * (day.r_market - day.r_free))


def _weights(day: MarketDay, beta: float, policy: WeightPolicy) -> tuple[float, bool]:
    if policy.mode is WeightMode.FIXED:
        return policy.c_idio, False
    if abs(day.r_asset) < DEGENERATE_RETURN:
        return 0.5, False
    ratio = jensen_alpha(day, beta) / day.r_asset
    lo, hi = policy.clamp
    c = min(max(ratio, lo), hi)
    return c, c != ratio


def weights(day: MarketDay, beta: float, policy: WeightPolicy) -> tuple[float, float]:
    """``(c_idio, c_macro)`` for one day; the pair always sums to one."""
    c, _ = _weights(day, beta, policy)
    return c, 1.0 - c


def weight_series(market: Sequence[MarketDay] | None, n_days: int, policy: WeightPolicy,
                  window: int) -> tuple[np.ndarray, int]:
    """Idiosyncratic weight for each day ``t`` built from market data through ``t - 1``.

    Returns the weights and the number of clamp events.  Day 0 and any day
    without enough history for beta use ``beta = 1`` over what is available,
    and degenerate market variance falls back to ``beta = 1`` as well.
    """
    c = np.full(n_days, policy.c_idio if policy.mode is WeightMode.FIXED else 0.5)
    if policy.mode is WeightMode.FIXED:
        return c, 0
    if market is None or len(market) < n_days:
        raise ValueError("Jensen weights need a market series covering every day")
    clamps = 0
    for t in range(1, n_days):
        prev = market[t - 1]
        hist = market[max(0, t - window):t]
        beta = 1.0
        if len(hist) >= 2:
            try:
                beta = beta_market(hist, len(hist))
            except DegenerateMarketError:
                beta = 1.0
        c[t], clamped = _weights(prev, beta, policy)
        clamps += clamped
    return c, clamps

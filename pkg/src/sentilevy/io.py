"""CSV and key=value file formats.

Floats are written with ``repr`` so that every file re-parses to the exact
in-memory values.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import DailyBar, ScoredMessage, SentimentDay, Stream, bars_from_closes
from .sentiment import MarketDay, aggregate_day

logger = logging.getLogger(__name__)

PRICE_HEADER = ["date", "close"]
SENTIMENT_HEADER = ["date", "s_idio", "s_macro", "e_idio", "e_macro"]
MESSAGE_HEADER = ["date", "stream", "compound", "neutral"]
RISKFREE_HEADER = ["date", "rate"]
PREDICTION_HEADER = ["day_index", "date", "r_actual", "r_pred", "eta_lag",
                     "jump_pred", "jump_actual"]
TRUTH_HEADER = ["date", "kappa", "eta", "eta_idio", "eta_macro", "eps", "z", "c_idio", "jump"]
SURFACE_HEADER = ["p_idio", "p_macro", "phi", "objective", "precision"]


class DataError(ValueError):
    """Malformed input file; the message names the file and line."""


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _rows(path, header: Sequence[str]):
    """Yield ``(line_number, row_dict)`` after checking the header."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        got = [h.strip() for h in got]
        if got != list(header):
            raise DataError(f"{path}:1: expected header {','.join(header)}, got {','.join(got)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, dict(zip(header, (c.strip() for c in row)))


def _date(path, line, text) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise DataError(f"{path}:{line}: bad ISO date {text!r}") from None


def _float(path, line, name, text) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{path}:{line}: bad number for {name}: {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{path}:{line}: non-finite {name}")
    return v


def _int(path, line, name, text) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{path}:{line}: bad integer for {name}: {text!r}") from None


@dataclass
class PriceSeries:
    dates: list
    bars: list

    @property
    def returns(self) -> np.ndarray:
        return np.array([b.log_return for b in self.bars[1:]], dtype=float)

    def __len__(self):
        return len(self.bars)


def _load_dated_closes(path):
    dates, closes = [], []
    for line, row in _rows(path, PRICE_HEADER):
        d = _date(path, line, row["date"])
        c = _float(path, line, "close", row["close"])
        if c <= 0:
            raise DataError(f"{path}:{line}: close must be positive, got {c}")
        if dates and d <= dates[-1]:
            raise DataError(f"{path}:{line}: dates must be strictly increasing ({d} after {dates[-1]})")
        dates.append(d)
        closes.append(c)
    return dates, closes


def load_prices(path) -> PriceSeries:
    dates, closes = _load_dated_closes(path)
    if len(dates) < 2:
        logger.warning("%s: %d price rows give no returns", path, len(dates))
    return PriceSeries(dates, bars_from_closes(closes))


def write_prices(path, dates, bars: Sequence[DailyBar]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRICE_HEADER)
        for d, b in zip(dates, bars):
            w.writerow([d.isoformat(), fmt(b.close)])


@dataclass
class SentimentSeries:
    dates: list
    days: list
    filled: int = 0


def _unit(path, line, name, text, lo) -> float:
    v = _float(path, line, name, text)
    if not lo <= v <= 1.0:
        raise DataError(f"{path}:{line}: {name}={v} outside [{lo:g}, 1]")
    return v


def _read_aggregated(path) -> dict:
    out = {}
    for line, row in _rows(path, SENTIMENT_HEADER):
        d = _date(path, line, row["date"])
        if d in out:
            raise DataError(f"{path}:{line}: duplicate date {d}")
        out[d] = (_float(path, line, "s_idio", row["s_idio"]),
                  _float(path, line, "s_macro", row["s_macro"]),
                  _unit(path, line, "e_idio", row["e_idio"], 0.0),
                  _unit(path, line, "e_macro", row["e_macro"], 0.0))
    return out


def _read_messages(path) -> dict:
    groups: dict = defaultdict(list)
    for line, row in _rows(path, MESSAGE_HEADER):
        d = _date(path, line, row["date"])
        try:
            stream = Stream(row["stream"])
        except ValueError:
            raise DataError(f"{path}:{line}: stream must be idio or macro, got {row['stream']!r}") from None
        compound = _unit(path, line, "compound", row["compound"], -1.0)
        neutral = _unit(path, line, "neutral", row["neutral"], 0.0)
        groups[d, stream].append(ScoredMessage(0, stream, compound, neutral))
    out = {}
    for d in sorted({d for d, _ in groups}):
        s_i, e_i = aggregate_day(groups.get((d, Stream.IDIO), []))
        s_m, e_m = aggregate_day(groups.get((d, Stream.MACRO), []))
        out[d] = (s_i, s_m, e_i, e_m)
    return out


def load_sentiment(path, mode: str = "aggregated", dates: Sequence[date] | None = None) -> SentimentSeries:
    """Read daily sentiment, aggregating raw scored messages in ``messages`` mode.

    With ``dates`` the result is aligned to them: ``day_index`` is the
    position in ``dates`` and days without sentiment get ``(0, 0, 1, 1)``.
    """
    if mode == "aggregated":
        table = _read_aggregated(path)
    elif mode == "messages":
        table = _read_messages(path)
    else:
        raise ValueError(f"unknown sentiment mode {mode!r}")
    if dates is None:
        dates = sorted(table)
    days, filled = [], 0
    for i, d in enumerate(dates):
        vals = table.get(d)
        if vals is None:
            filled += 1
            days.append(SentimentDay(i))
        else:
            days.append(SentimentDay(i, *vals))
    if filled:
        logger.info("%s: %d days without sentiment filled as empty", path, filled)
    return SentimentSeries(list(dates), days, filled)


def write_sentiment(path, dates, days: Sequence[SentimentDay]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SENTIMENT_HEADER)
        for d, s in zip(dates, days):
            w.writerow([d.isoformat(), fmt(s.s_idio), fmt(s.s_macro), fmt(s.e_idio), fmt(s.e_macro)])


def write_messages(path, rows: Iterable[tuple[date, str, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MESSAGE_HEADER)
        for d, stream, compound, neutral in rows:
            w.writerow([d.isoformat(), stream, fmt(compound), fmt(neutral)])


def load_market(prices: PriceSeries, market_path, rf_daily: float = 0.0,
                riskfree_path=None) -> list[MarketDay]:
    """Market days aligned to ``prices``; every price date needs an index close."""
    mdates, mcloses = _load_dated_closes(market_path)
    close_at = dict(zip(mdates, mcloses))
    rf = {}
    if riskfree_path is not None:
        for line, row in _rows(riskfree_path, RISKFREE_HEADER):
            rf[_date(riskfree_path, line, row["date"])] = _float(riskfree_path, line, "rate", row["rate"])
    missing = [d for d in prices.dates if d not in close_at]
    if missing:
        raise DataError(f"{market_path}: no index close for {len(missing)} price dates, first {missing[0]}")
    rm = np.concatenate(([0.0], np.diff(np.log([close_at[d] for d in prices.dates]))))
    out = []
    for i, (d, b) in enumerate(zip(prices.dates, prices.bars)):
        ra = b.log_return if i else 0.0
        out.append(MarketDay(i, ra, float(rm[i]), rf.get(d, rf_daily)))
    return out


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v.isoformat() if isinstance(v, date) else v if isinstance(v, str) else fmt(v)
                        for v in row])


@dataclass(frozen=True)
class PredictionRow:
    day_index: int
    date: date
    r_actual: float
    r_pred: float
    eta_lag: float
    jump_pred: int
    jump_actual: int


def write_predictions(path, rows: Sequence[PredictionRow]) -> None:
    write_rows(path, PREDICTION_HEADER,
               ([r.day_index, r.date, r.r_actual, r.r_pred, r.eta_lag, r.jump_pred, r.jump_actual]
                for r in rows))


def load_predictions(path) -> list[PredictionRow]:
    out = []
    for line, row in _rows(path, PREDICTION_HEADER):
        flags = []
        for name in ("jump_pred", "jump_actual"):
            v = _int(path, line, name, row[name])
            if v not in (-1, 0, 1):
                raise DataError(f"{path}:{line}: {name} must be -1, 0 or 1")
            flags.append(v)
        out.append(PredictionRow(
            _int(path, line, "day_index", row["day_index"]),
            _date(path, line, row["date"]),
            _float(path, line, "r_actual", row["r_actual"]),
            _float(path, line, "r_pred", row["r_pred"]),
            _float(path, line, "eta_lag", row["eta_lag"]),
            *flags))
    return out


def write_truth(path, dates, truth) -> None:
    write_rows(path, TRUTH_HEADER, zip(dates, truth.kappa, truth.eta, truth.eta_idio,
                                       truth.eta_macro, truth.eps, truth.z, truth.c_idio,
                                       truth.jump.tolist()))


def load_truth(path) -> dict:
    cols: dict = {h: [] for h in TRUTH_HEADER}
    for line, row in _rows(path, TRUTH_HEADER):
        cols["date"].append(_date(path, line, row["date"]))
        for h in TRUTH_HEADER[1:-1]:
            cols[h].append(_float(path, line, h, row[h]))
        cols["jump"].append(_int(path, line, "jump", row["jump"]))
    return {k: (v if k == "date" else np.array(v)) for k, v in cols.items()}


def write_keyvalue(path, items, comment: str | None = None) -> None:
    lines = [f"# {comment}"] if comment else []
    for k, v in items:
        if isinstance(v, date):
            v = v.isoformat()
        elif isinstance(v, float) or isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            v = fmt(v)
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_keyvalue(path) -> dict:
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{n}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def business_days(start: date, n: int) -> list[date]:
    """``n`` consecutive weekdays from ``start`` (moved forward off a weekend)."""
    out = []
    d = start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out

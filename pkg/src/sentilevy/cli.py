"""``senti-levy`` command line: simulate, train, predict, evaluate.

Exit codes: 0 success, 1 data or configuration error, 2 optimisation or
filter failure.
"""

from __future__ import annotations

import argparse
import bisect
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig
from .io import DataError, PredictionRow
from .model import MemoryParams, ModelParams, SentimentDay, WeightMode, WeightPolicy
from .optimizer import (GridSpec, JumpSet, OptimizationError, grid_search,
                        objective_u, precision, run_filter, tolerant_hits)
from .simulator import LevyParams, SentimentGen, calibrate, simulate_levy, simulate_modified
from .ukf import SigmaConfig

logger = logging.getLogger("sentilevy")

MIN_TRAIN_DAYS = 100


class FilterFailure(RuntimeError):
    pass


def _window(dates, start, end) -> tuple[int, int]:
    i0 = 0 if start is None else bisect.bisect_left(dates, start)
    i1 = len(dates) if end is None else bisect.bisect_right(dates, end)
    return i0, i1


@dataclass
class Data:
    prices: io.PriceSeries
    sentiment: io.SentimentSeries
    market: list | None


def load_data(cfg: RunConfig) -> Data:
    cfg.require_files("prices", "sentiment")
    prices = io.load_prices(cfg.prices)
    sent = io.load_sentiment(cfg.sentiment, cfg.sentiment_mode, prices.dates)
    market = None
    if cfg.weights == WeightMode.JENSEN.value:
        cfg.require_files("market")
        if cfg.riskfree is not None:
            cfg.require_files("riskfree")
        market = io.load_market(prices, cfg.market, cfg.rf_daily, cfg.riskfree)
    return Data(prices, sent, market)


def _slice(data: Data, i0: int, i1: int):
    market = data.market[i0:i1] if data.market is not None else None
    return data.prices.bars[i0:i1], data.sentiment.days[i0:i1], market


def _train_window(cfg: RunConfig, dates) -> tuple[int, int]:
    end = cfg.train_end
    i0, i1 = _window(dates, cfg.train_start, end)
    if end is None and cfg.test_start is not None:
        i1 = bisect.bisect_left(dates, cfg.test_start)
    return i0, i1


def _sigma_config(cfg: RunConfig) -> SigmaConfig:
    return SigmaConfig(n=5, alpha_s=cfg.alpha_s, beta_s=cfg.beta_s, kappa_s=cfg.kappa_s)


def _base_params(cfg: RunConfig, mu: float, sigma: float, nu: float) -> ModelParams:
    try:
        mode = WeightMode(cfg.weights)
    except ValueError:
        raise DataError(f"weights must be 'fixed' or 'jensen', got {cfg.weights!r}") from None
    return ModelParams(mu=mu, nu=nu, sigma=sigma, g=cfg.g, kappa0=cfg.kappa0,
                       rf_daily=cfg.rf_daily, beta_window=cfg.beta_window,
                       weights=WeightPolicy(mode, cfg.c_idio), sigma_z=cfg.sigma_z,
                       sigma_eps=cfg.sigma_eps, q_eta=cfg.q_eta, r_floor=cfg.r_floor,
                       eps_eta=cfg.eps_eta)


def _grid(cfg: RunConfig) -> GridSpec:
    return GridSpec(cfg.coef_err, (cfg.p_idio_min, cfg.p_idio_max),
                    (cfg.p_macro_min, cfg.p_macro_max), (cfg.phi_min, cfg.phi_max))


# ---------------------------------------------------------------- simulate

def simulation_model(cfg: RunConfig) -> tuple[ModelParams, SentimentGen]:
    """Ground-truth parameters and sentiment generator described by the ``sim_*`` keys."""
    kappa0 = cfg.sim_kappa0 if cfg.sim_kappa0 is not None else cfg.g / (1.0 - cfg.sim_phi)
    params = ModelParams(
        mu=cfg.sim_mu, sigma=cfg.sim_sigma, sigma_z=cfg.sim_sigma, phi=cfg.sim_phi, g=cfg.g,
        mem_idio=MemoryParams(cfg.sim_p_idio), mem_macro=MemoryParams(cfg.sim_p_macro),
        kappa0=kappa0, sigma_eps=cfg.sim_sigma_eps,
        weights=WeightPolicy(WeightMode.FIXED, cfg.sim_c_idio))
    gen = SentimentGen(cfg.sim_spike_prob, cfg.sim_spike_scale, cfg.sim_e_idio, cfg.sim_e_macro)
    return params, gen


def cmd_simulate(cfg: RunConfig) -> dict:
    """Write ``prices.csv``, ``sentiment.csv`` and (modified model) ``truth.csv``."""
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    n = cfg.sim_days
    if n < 2:
        raise DataError("sim_days must be >= 2")
    dates = io.business_days(cfg.sim_start, n)
    written = {}
    if cfg.sim_model == "modified":
        truth_params, gen = simulation_model(cfg)
        bars, sent, truth = simulate_modified(truth_params, gen, n - 1, cfg.seed)
        io.write_truth(out / "truth.csv", dates, truth)
        written["truth"] = out / "truth.csv"
    elif cfg.sim_model == "levy":
        lp = LevyParams(cfg.sim_mu, cfg.sim_sigma, cfg.sim_lambda, cfg.sim_kappa_j, cfg.sim_sigma_j)
        bars = simulate_levy(lp, n - 1, cfg.seed)
        sent = [SentimentDay(i) for i in range(n)]
    else:
        raise DataError(f"sim_model must be 'modified' or 'levy', got {cfg.sim_model!r}")
    io.write_prices(out / "prices.csv", dates, bars)
    io.write_sentiment(out / "sentiment.csv", dates, sent)
    written.update(prices=out / "prices.csv", sentiment=out / "sentiment.csv")
    logger.info("simulated %d days into %s", n, out)
    return written


# ------------------------------------------------------------------- train

def cmd_train(cfg: RunConfig) -> Path:
    """Grid-search the memory/momentum triple on the training window."""
    data = load_data(cfg)
    dates = data.prices.dates
    i0, i1 = _train_window(cfg, dates)
    if i1 - i0 < 3:
        raise DataError(f"training window holds {i1 - i0} days; need at least 3")
    if i1 - i0 < MIN_TRAIN_DAYS:
        logger.warning("training window holds only %d days", i1 - i0)
    h0 = _window(dates, cfg.history_start, None)[0] if cfg.history_start else i0
    bars, sent, market = _slice(data, i0, i1)
    history = data.prices.bars[h0:i1]
    # the first bar of the file has no return; calibrate() skips it
    mu, sigma, nu = calibrate(bars, history)
    params = _base_params(cfg, mu, sigma, nu)
    grid = _grid(cfg)
    result = grid_search(bars, sent, market, params, grid, _sigma_config(cfg), cfg.gate,
                         cfg.workers)
    best = result.best_result
    p_i, p_m, phi = result.best_triple

    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    surface_path = out / "surface.csv"
    io.write_rows(surface_path, io.SURFACE_HEADER, result.surface_rows())
    items = [
        ("mu", mu), ("nu", nu), ("sigma", sigma),
        ("p_idio", p_i), ("p_macro", p_m), ("phi", phi),
        ("g", cfg.g), ("kappa0", cfg.kappa0), ("rf_daily", cfg.rf_daily),
        ("beta_window", cfg.beta_window), ("weights", cfg.weights), ("c_idio", cfg.c_idio),
        ("sigma_z", "none" if cfg.sigma_z is None else cfg.sigma_z),
        ("sigma_eps", cfg.sigma_eps), ("q_eta", cfg.q_eta), ("r_floor", cfg.r_floor),
        ("eps_eta", cfg.eps_eta), ("alpha_s", cfg.alpha_s), ("beta_s", cfg.beta_s),
        ("kappa_s", cfg.kappa_s), ("gate", "none" if cfg.gate is None else cfg.gate),
        ("coef_err", cfg.coef_err),
        ("grid_p_idio", " ".join(io.fmt(v) for v in grid.axis("p_idio"))),
        ("grid_p_macro", " ".join(io.fmt(v) for v in grid.axis("p_macro"))),
        ("grid_phi", " ".join(io.fmt(v) for v in grid.axis("phi"))),
        ("train_start", dates[i0]), ("train_end", dates[i1 - 1]),
        ("history_start", dates[h0]), ("train_days", i1 - i0),
        ("objective", best.objective), ("precision", best.precision),
        ("jumps_predicted", len(best.jumps_pred)), ("jumps_actual", len(best.jumps_actual)),
        ("lattice_points", len(result.surface)),
        ("failed_points", sum(1 for u, _ in result.surface.values() if u == float("-inf"))),
        ("prices_sha256", io.file_digest(cfg.prices)),
        ("sentiment_sha256", io.file_digest(cfg.sentiment)),
    ]
    if cfg.market:
        items.append(("market_sha256", io.file_digest(cfg.market)))
    items.append(("surface_file", surface_path.name))
    path = cfg.params_path
    path.parent.mkdir(parents=True, exist_ok=True)
    io.write_keyvalue(path, items, "fitted sentiment-memory model parameters")
    logger.info("best triple %s objective %.4f", result.best_triple, best.objective)
    return path


def read_params(path) -> tuple[ModelParams, SigmaConfig, float | None]:
    kv = io.read_keyvalue(path)
    try:
        f = lambda k: float(kv[k])  # noqa: E731
        opt = lambda k: None if kv[k] in ("none", "") else float(kv[k])  # noqa: E731
        params = ModelParams(
            mu=f("mu"), nu=f("nu"), sigma=f("sigma"), phi=f("phi"), g=f("g"),
            mem_idio=MemoryParams(f("p_idio")), mem_macro=MemoryParams(f("p_macro")),
            kappa0=f("kappa0"), rf_daily=f("rf_daily"), beta_window=int(kv["beta_window"]),
            weights=WeightPolicy(WeightMode(kv["weights"]), f("c_idio")),
            sigma_z=opt("sigma_z"), sigma_eps=f("sigma_eps"), q_eta=f("q_eta"),
            r_floor=f("r_floor"), eps_eta=f("eps_eta"))
        sigma_cfg = SigmaConfig(5, f("alpha_s"), f("beta_s"), f("kappa_s"))
        gate = opt("gate")
    except KeyError as exc:
        raise DataError(f"{path}: missing parameter {exc.args[0]}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return params, sigma_cfg, gate


# ----------------------------------------------------------------- predict

def _flags(js: JumpSet, days) -> list[int]:
    return [js.sign(int(d)) for d in days]


def cmd_predict(cfg: RunConfig) -> Path:
    """Filter the test window online with fitted parameters."""
    if not cfg.params_path.is_file():
        raise DataError(f"params file not found: {cfg.params_path}")
    params, sigma_cfg, gate = read_params(cfg.params_path)
    data = load_data(cfg)
    dates = data.prices.dates
    start = cfg.test_start
    if start is None:
        if cfg.train_end is None:
            raise DataError("predict needs test_start or train_end")
        i0 = bisect.bisect_right(dates, cfg.train_end)
    else:
        i0 = bisect.bisect_left(dates, start)
    i1 = _window(dates, None, cfg.test_end)[1]
    if i0 >= i1:
        raise DataError("test window holds no price days")
    if i0 < 1 or not np.isfinite(data.prices.bars[i0].log_return):
        raise DataError("the test window needs one earlier price day to anchor the filter")
    # the filter starts on the last day before the window so every test day is predicted
    bars, sent, market = _slice(data, i0 - 1, i1)
    res = run_filter(bars, sent, market, params, sigma_cfg=sigma_cfg, gate=gate)
    if res.failed:
        raise FilterFailure(res.diagnostics.failure)

    days = res.days
    rows = [PredictionRow(int(d), dates[int(d)], float(ra), float(rp), float(e), jp, ja)
            for d, ra, rp, e, jp, ja in zip(days, res.actual_returns, res.predicted_returns,
                                            res.eta_series, _flags(res.jumps_pred, days),
                                            _flags(res.jumps_actual, days))]
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    path = cfg.predictions_path
    io.write_predictions(path, rows)
    filled = sum(1 for d in data.sentiment.days[i0:i1]
                 if (d.s_idio, d.s_macro, d.e_idio, d.e_macro) == (0.0, 0.0, 1.0, 1.0))
    diag = res.diagnostics
    io.write_keyvalue(out / "predict_summary.txt", [
        ("test_start", dates[i0]), ("test_end", dates[i1 - 1]), ("test_days", i1 - i0),
        ("precision", res.precision), ("objective", res.objective),
        ("jumps_predicted", len(res.jumps_pred)), ("jumps_actual", len(res.jumps_actual)),
        ("empty_prediction", int(diag.empty_prediction)),
        ("tolerant_precision", diag.tolerant_precision),
        ("kappa_clamps", diag.kappa_clamps), ("weight_clamps", diag.weight_clamps),
        ("sentiment_filled_days", filled),
    ], "out-of-sample prediction summary")
    return path


# ---------------------------------------------------------------- evaluate

def evaluate_rows(rows) -> dict:
    days = [r.day_index for r in rows]
    pred = JumpSet([d for d, r in zip(days, rows) if r.jump_pred > 0],
                   [d for d, r in zip(days, rows) if r.jump_pred < 0])
    actual = JumpSet([d for d, r in zip(days, rows) if r.jump_actual > 0],
                     [d for d, r in zip(days, rows) if r.jump_actual < 0])
    t_len = max(len(rows), 1)
    hits = len(pred.positive & actual.positive) + len(pred.negative & actual.negative)
    return {
        "days": len(rows), "precision": precision(pred, actual),
        "objective": objective_u(pred, actual, t_len),
        "jumps_predicted": len(pred), "jumps_actual": len(actual), "hits": hits,
        "false_alarms": len(pred) - hits,
        "missed": len(actual) - hits,
        "empty_prediction": int(len(pred) == 0),
        "tolerant_hits": tolerant_hits(pred, actual),
        "tolerant_precision": tolerant_hits(pred, actual) / len(pred) if len(pred) else 0.0,
    }


def _outcome(jp: int, ja: int) -> str:
    if jp and jp == ja:
        return "hit"
    if jp and ja:
        return "wrong_sign"
    return "false_alarm" if jp else "miss"


def cmd_evaluate(cfg: RunConfig) -> dict:
    """Metrics, hit/miss table and three-panel plot data from a predictions file."""
    path = cfg.predictions_path
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")
    rows = io.load_predictions(path)
    if not rows:
        raise DataError(f"{path}: no prediction rows")
    metrics = evaluate_rows(rows)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_rows(out / "plot_data.csv", ["date", "r_actual", "r_pred", "eta_lag"],
                  ((r.date, r.r_actual, r.r_pred, r.eta_lag) for r in rows))
    io.write_rows(out / "jump_table.csv", ["day_index", "date", "jump_pred", "jump_actual", "outcome"],
                  ((r.day_index, r.date, r.jump_pred, r.jump_actual, _outcome(r.jump_pred, r.jump_actual))
                   for r in rows if r.jump_pred or r.jump_actual))
    io.write_keyvalue(out / "metrics.txt", list(metrics.items()), "jump prediction metrics")
    return metrics


# -------------------------------------------------------------------- main

COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "predict": cmd_predict,
            "evaluate": cmd_evaluate}


def _overrides(pairs) -> dict:
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise DataError(f"--set expects KEY=VALUE, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="senti-levy", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", "-c", help="key=value config file")
        p.add_argument("--set", "-s", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--output-dir", "-o", help="shorthand for --set output_dir=...")
        p.add_argument("--verbose", "-v", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _overrides(args.set)
        if args.output_dir:
            overrides["output_dir"] = args.output_dir
        cfg = RunConfig.load(args.config, overrides)
        result = COMMANDS[args.command](cfg)
    except (OptimizationError, FilterFailure) as exc:
        logger.error("%s", exc)
        return 2
    except (DataError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    if isinstance(result, dict):
        for k, v in result.items():
            print(f"{k}={v}")
    elif result is not None:
        print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())

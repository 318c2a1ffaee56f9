"""Jump detection, the overlap objective, full filter runs and the parameter grid search."""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import ukf
from .model import (DailyBar, ModelBlowUp, ModelParams, SentimentDay, clamp_eta,
                    kappa_star, measure_points, transition_points)
from .sentiment import MarketDay, weight_series

logger = logging.getLogger(__name__)

JUMP_Z = 1.96
FAILED = -math.inf


class OptimizationError(RuntimeError):
    """Every lattice point of a grid search failed."""


@dataclass(frozen=True)
class JumpSet:
    positive: frozenset = frozenset()
    negative: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "positive", frozenset(self.positive))
        object.__setattr__(self, "negative", frozenset(self.negative))
        if self.positive & self.negative:
            raise ValueError("a day cannot be both a positive and a negative jump")

    def __len__(self):
        return len(self.positive) + len(self.negative)

    def sign(self, day: int) -> int:
        return 1 if day in self.positive else -1 if day in self.negative else 0


def detect_jumps(returns, mu: float, sigma: float, days=None) -> JumpSet:
    """Days whose return deviates from ``mu`` by more than 1.96 ``sigma``.

    ``days`` labels the entries of ``returns``; positions are used otherwise.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    dev = np.asarray(returns, dtype=float) - mu
    labels = np.arange(dev.shape[0]) if days is None else np.asarray(days)
    bound = JUMP_Z * sigma
    return JumpSet(labels[dev > bound].tolist(), labels[dev < -bound].tolist())


def _hits(pred: JumpSet, actual: JumpSet) -> int:
    return len(pred.positive & actual.positive) + len(pred.negative & actual.negative)


def objective_u(pred: JumpSet, actual: JumpSet, t_len: int) -> float:
    """Sign-matched hits minus false alarms, per day of the horizon."""
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    false = len(pred.positive - actual.positive) + len(pred.negative - actual.negative)
    return (_hits(pred, actual) - false) / t_len


def precision(pred: JumpSet, actual: JumpSet) -> float:
    """Fraction of predicted jumps that are actual jumps of the same sign (0 if none)."""
    n = len(pred)
    return _hits(pred, actual) / n if n else 0.0


def tolerant_hits(pred: JumpSet, actual: JumpSet, tolerance: int = 1) -> int:
    """Predicted jumps matched by a same-sign actual jump within ``tolerance`` days."""
    count = 0
    for mine, theirs in ((pred.positive, actual.positive), (pred.negative, actual.negative)):
        for d in mine:
            if any(d + k in theirs for k in range(-tolerance, tolerance + 1)):
                count += 1
    return count


@dataclass
class Diagnostics:
    kappa_clamps: int = 0
    weight_clamps: int = 0
    empty_prediction: bool = False
    tolerant_precision: float = 0.0
    innovation_mean: tuple = (0.0, 0.0)
    innovation_std: tuple = (0.0, 0.0)
    failure: str | None = None


@dataclass
class RunResult:
    """Outcome of one filter pass.  Per-day arrays cover days ``1 .. T-1``."""

    triple: tuple
    days: np.ndarray
    actual_returns: np.ndarray
    predicted_returns: np.ndarray
    eta_series: np.ndarray
    jumps_pred: JumpSet
    jumps_actual: JumpSet
    objective: float
    precision: float
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def failed(self) -> bool:
        return self.diagnostics.failure is not None


@dataclass(frozen=True)
class FilterInputs:
    """Day-aligned arrays consumed by the filter loop."""

    days: np.ndarray
    returns: np.ndarray
    s_idio: np.ndarray
    s_macro: np.ndarray
    e_idio: np.ndarray
    e_macro: np.ndarray
    c_idio: np.ndarray
    weight_clamps: int = 0

    def __len__(self):
        return self.returns.shape[0]


def prepare_inputs(bars: Sequence[DailyBar], sent: Sequence[SentimentDay],
                   market: Sequence[MarketDay] | None, params: ModelParams) -> FilterInputs:
    n = len(bars)
    if n < 2:
        raise ValueError("need at least two days")
    if len(sent) != n:
        raise ValueError(f"{len(sent)} sentiment days for {n} bars")
    for b, s in zip(bars, sent):
        if b.day_index != s.day_index:
            raise ValueError(f"bars and sentiment misaligned at day {b.day_index}")
    c, clamps = weight_series(market, n, params.weights, params.beta_window)
    return FilterInputs(
        days=np.array([b.day_index for b in bars]),
        returns=np.array([b.log_return for b in bars], dtype=float),
        s_idio=np.array([s.s_idio for s in sent], dtype=float),
        s_macro=np.array([s.s_macro for s in sent], dtype=float),
        e_idio=np.array([s.e_idio for s in sent], dtype=float),
        e_macro=np.array([s.e_macro for s in sent], dtype=float),
        c_idio=c,
        weight_clamps=clamps,
    )


def initial_belief(inputs: FilterInputs, params: ModelParams) -> ukf.Belief:
    """Zero memory before day 0, then day 0's sentiment folded in."""
    eta_i = params.mem_idio.a * inputs.s_idio[0]
    eta_m = params.mem_macro.a * inputs.s_macro[0]
    c = inputs.c_idio[0]
    mean = np.array([params.mu - params.nu, params.kappa0,
                     c * eta_i + (1.0 - c) * eta_m, eta_i, eta_m])
    cov = np.diag([params.sigma ** 2, 1.0, 0.1, 0.1, 0.1])
    return ukf.Belief(mean, cov)


def process_noise(params: ModelParams) -> np.ndarray:
    q = params.q_eta
    return np.diag([params.noise_z ** 2, params.sigma_eps ** 2, q, q, q])


def _run(inputs: FilterInputs, params: ModelParams, cfg: ukf.SigmaConfig,
         gate: float | None = None) -> RunResult:
    n = len(inputs)
    r = inputs.returns
    pred = np.full(n - 1, np.nan)
    eta_lag = np.full(n - 1, np.nan)
    innovations = np.zeros((n - 1, 2))
    q = process_noise(params)
    a_i2 = params.mem_idio.a ** 2
    a_m2 = params.mem_macro.a ** 2
    clamps = 0
    failure = None
    belief = initial_belief(inputs, params)
    try:
        for t in range(1, n):
            c = inputs.c_idio[t]
            eta_prev = belief.mean[2]
            s_i, s_m = inputs.s_idio[t], inputs.s_macro[t]

            def dynamics(pts, s_i=s_i, s_m=s_m, c=c):
                return transition_points(pts, s_i, s_m, c, 1.0 - c, params)

            prior = ukf.predict(belief, dynamics, q, cfg)
            pred[t - 1] = prior.mean[0]
            eta_lag[t - 1] = eta_prev

            rho = (a_i2 * inputs.e_idio[t - 1] ** 2 + a_m2 * inputs.e_macro[t - 1] ** 2
                   + params.r_floor)
            eta_c, clamped = clamp_eta(eta_prev, params.eps_eta)
            clamps += clamped
            noise_r = np.diag([rho, rho / (eta_c * eta_c)])
            z = (r[t], kappa_star(r[t], eta_prev, params))
            belief, innovations[t - 1] = ukf.update(prior, measure_points, z, noise_r, cfg, gate)
    except (ukf.CovarianceError, ModelBlowUp, FloatingPointError, np.linalg.LinAlgError) as exc:
        failure = f"{type(exc).__name__}: {exc}"
        logger.warning("filter run failed for triple %s: %s", params.triple, failure)

    days = inputs.days[1:]
    actual = detect_jumps(r[1:], params.mu, params.sigma, days)
    diag = Diagnostics(kappa_clamps=clamps, weight_clamps=inputs.weight_clamps, failure=failure)
    if failure is not None:
        return RunResult(params.triple, days, r[1:], pred, eta_lag, JumpSet(), actual,
                         FAILED, 0.0, diag)

    jp = detect_jumps(pred, params.mu, params.sigma, days)
    diag.empty_prediction = len(jp) == 0
    diag.tolerant_precision = tolerant_hits(jp, actual) / len(jp) if len(jp) else 0.0
    diag.innovation_mean = tuple(float(v) for v in innovations.mean(axis=0))
    diag.innovation_std = tuple(float(v) for v in innovations.std(axis=0))
    return RunResult(params.triple, days, r[1:], pred, eta_lag, jp, actual,
                     objective_u(jp, actual, n - 1), precision(jp, actual), diag)


def default_sigma_config() -> ukf.SigmaConfig:
    return ukf.SigmaConfig(n=5)


def run_filter(bars: Sequence[DailyBar], sent: Sequence[SentimentDay],
               market: Sequence[MarketDay] | None, params: ModelParams,
               triple: tuple[float, float, float] | None = None,
               sigma_cfg: ukf.SigmaConfig | None = None,
               gate: float | None = None) -> RunResult:
    """Filter a dataset once and score the predicted jumps.

    For each day ``t >= 1`` the prior mean return is the prediction for
    ``t``; it depends on sentiment through ``t - 1`` only.  The posterior is
    then updated with the observed return and the implied amplitude.
    """
    if triple is not None:
        params = params.with_triple(*triple)
    inputs = prepare_inputs(bars, sent, market, params)
    return _run(inputs, params, sigma_cfg or default_sigma_config(), gate)


@dataclass(frozen=True)
class GridSpec:
    coef_err: float = 0.1
    p_idio: tuple | None = None
    p_macro: tuple | None = None
    phi: tuple | None = None
    values: dict | None = None

    def __post_init__(self):
        if not 0.0 < self.coef_err < 1.0:
            raise ValueError("coef_err must lie in (0, 1)")
        if self.values is None:
            for name in ("p_idio", "p_macro", "phi"):
                if len(self.axis(name)) < 2:
                    raise ValueError(f"grid axis {name} has fewer than 2 points")

    @classmethod
    def from_values(cls, p_idio, p_macro, phi) -> GridSpec:
        vals = {"p_idio": tuple(p_idio), "p_macro": tuple(p_macro), "phi": tuple(phi)}
        return cls(values=vals)

    def axis(self, name: str) -> np.ndarray:
        if self.values is not None:
            return np.array(sorted(self.values[name]), dtype=float)
        k = np.arange(1, int(math.floor(1.0 / self.coef_err + 1e-9)) + 1)
        pts = np.round(k * self.coef_err, 12)
        pts = pts[pts < 1.0 - 1e-12]
        lo, hi = getattr(self, name) or (0.0, 1.0)
        return pts[(pts >= lo - 1e-12) & (pts <= hi + 1e-12)]

    def lattice(self) -> list[tuple[float, float, float]]:
        axes = [self.axis(n).tolist() for n in ("p_idio", "p_macro", "phi")]
        return list(itertools.product(*axes))


@dataclass
class GridResult:
    best_triple: tuple
    best_result: RunResult
    surface: dict = field(repr=False)

    def surface_rows(self):
        """``(p_idio, p_macro, phi, objective, precision)`` sorted by triple."""
        return [(*k, *v) for k, v in sorted(self.surface.items())]


_WORKER: dict = {}


def _init_worker(inputs, params, cfg, gate):
    _WORKER.update(inputs=inputs, params=params, cfg=cfg, gate=gate)


def _score(triple):
    w = _WORKER
    res = _run(w["inputs"], w["params"].with_triple(*triple), w["cfg"], w["gate"])
    return triple, res.objective, res.precision


def _better(cand: tuple, inc: tuple | None) -> bool:
    # (objective, triple); higher objective wins, equal objective -> smaller triple
    if inc is None:
        return True
    if cand[0] != inc[0]:
        return cand[0] > inc[0]
    return cand[1] < inc[1]


def grid_search(bars: Sequence[DailyBar], sent: Sequence[SentimentDay],
                market: Sequence[MarketDay] | None, params: ModelParams,
                grid: GridSpec | None = None, sigma_cfg: ukf.SigmaConfig | None = None,
                gate: float | None = None, workers: int | None = 1) -> GridResult:
    """Evaluate the objective on every ``(p_idio, p_macro, phi)`` lattice point.

    ``workers`` > 1 farms lattice points to a process pool; ``None`` uses
    every available CPU.  The reduction does not depend on evaluation order.
    """
    grid = grid or GridSpec()
    cfg = sigma_cfg or default_sigma_config()
    inputs = prepare_inputs(bars, sent, market, params)
    lattice = grid.lattice()
    if workers is None:
        workers = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    if workers > 1 and len(lattice) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(inputs, params, cfg, gate)) as pool:
            scored = list(pool.map(_score, lattice, chunksize=max(1, len(lattice) // (4 * workers))))
    else:
        _init_worker(inputs, params, cfg, gate)
        scored = [_score(t) for t in lattice]

    surface = {}
    best = None
    for triple, u, prec in scored:
        surface[triple] = (u, prec)
        if u == FAILED:
            continue
        if _better((u, triple), best):
            best = (u, triple)
    if best is None:
        raise OptimizationError(f"all {len(lattice)} lattice points failed")
    best_triple = best[1]
    best_result = _run(inputs, params.with_triple(*best_triple), cfg, gate)
    return GridResult(best_triple, best_result, surface)

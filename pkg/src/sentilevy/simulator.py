"""Synthetic datasets from the classical jump diffusion and the sentiment-memory model.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``; the
draw order below is part of the dataset contract, so changing it changes
every seeded dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (DailyBar, ModelParams, SentimentDay, WeightMode, bars_from_closes,
                    transition_points)
from .optimizer import detect_jumps

RNG_NAME = "numpy.PCG64"
P0 = 100.0


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class LevyParams:
    mu: float = 0.0
    sigma: float = 0.01
    lambda_j: float = 0.0
    kappa_j: float = 0.0
    sigma_j: float = 0.01

    def __post_init__(self):
        if not (self.sigma > 0 and self.sigma_j > 0):
            raise ValueError("sigma and sigma_j must be positive")
        if self.lambda_j < 0:
            raise ValueError("lambda_j must be non-negative")


@dataclass(frozen=True)
class SentimentGen:
    """Sparse-spike sentiment: zero on most days, ``N(0, spike_scale^2)`` on spike days.

    The two streams draw independently; the noise channels are constant.
    """

    spike_prob: float = 0.03
    spike_scale: float = 0.1
    e_idio: float = 0.3
    e_macro: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.spike_prob <= 1.0:
            raise ValueError("spike_prob must lie in [0, 1]")
        if self.spike_scale < 0:
            raise ValueError("spike_scale must be non-negative")


@dataclass
class SyntheticTruth:
    """Latent paths behind a simulated dataset, indexed by day ``0 .. T``."""

    params: ModelParams
    sentiment_gen: SentimentGen
    seed: int
    kappa: np.ndarray
    eta: np.ndarray
    eta_idio: np.ndarray
    eta_macro: np.ndarray
    eps: np.ndarray
    z: np.ndarray
    c_idio: np.ndarray
    jump: np.ndarray
    rng: str = field(default=RNG_NAME)


def _bars_from_returns(returns: np.ndarray) -> list[DailyBar]:
    # bar returns are recomputed from the closes so that a CSV round trip is exact
    closes = P0 * np.exp(np.concatenate(([0.0], np.cumsum(returns))))
    return bars_from_closes(closes)


def simulate_levy_returns(p: LevyParams, t_len: int, seed: int) -> np.ndarray:
    """Daily log returns ``mu + Z + sum_j J_j - lambda * kappa``."""
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    rng = make_rng(seed)
    z = rng.normal(0.0, p.sigma, t_len)
    counts = rng.poisson(p.lambda_j, t_len)
    # sum of N iid N(k, s^2) is N(N k, N s^2)
    jumps = counts * p.kappa_j + p.sigma_j * np.sqrt(counts) * rng.standard_normal(t_len)
    return p.mu + z + (jumps - p.lambda_j * p.kappa_j)


def simulate_levy(p: LevyParams, t_len: int, seed: int) -> list[DailyBar]:
    """``t_len + 1`` bars starting at a close of 100; bar 0 carries no return."""
    return _bars_from_returns(simulate_levy_returns(p, t_len, seed))


def _draw_sentiment(gen: SentimentGen, rng: np.random.Generator, n: int) -> np.ndarray:
    spikes = rng.random((n, 2)) < gen.spike_prob
    size = rng.normal(0.0, gen.spike_scale, (n, 2)) if gen.spike_scale > 0 else np.zeros((n, 2))
    return np.where(spikes, size, 0.0)


def simulate_modified(params: ModelParams, sentiment_gen: SentimentGen | None = None,
                      t_len: int = 250, seed: int = 0):
    """Simulate ``t_len`` returns from the sentiment-memory model.

    Day 0 carries sentiment and the initial latents (memory from day-0
    sentiment, amplitude ``kappa0``) but no return.  For ``t >= 1`` the
    latents advance through the model transition, the amplitude picks up
    ``N(0, sigma_eps^2)`` and the return picks up ``N(0, sigma_z^2)``, so
    ``r(t) = mu + Z + kappa(t-1) eta(t-1) - nu``.

    Returns ``(bars, sentiment, truth)``, each covering days ``0 .. t_len``.
    """
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    if params.weights.mode is not WeightMode.FIXED:
        raise ValueError("simulation supports fixed memory weights only")
    gen = sentiment_gen or SentimentGen()
    rng = make_rng(seed)
    n = t_len + 1
    s = _draw_sentiment(gen, rng, n)
    eps = rng.normal(0.0, 1.0, n) * params.sigma_eps
    z = rng.normal(0.0, 1.0, n) * params.noise_z
    eps[0] = z[0] = 0.0
    c = params.weights.c_idio

    states = np.zeros((n, 5))
    eta_i = params.mem_idio.a * s[0, 0]
    eta_m = params.mem_macro.a * s[0, 1]
    states[0] = (0.0, params.kappa0, c * eta_i + (1.0 - c) * eta_m, eta_i, eta_m)
    for t in range(1, n):
        nxt = transition_points(states[t - 1:t], s[t, 0], s[t, 1], c, 1.0 - c, params)[0]
        nxt[0] += z[t]
        nxt[1] += eps[t]
        states[t] = nxt

    returns = states[1:, 0]
    bars = _bars_from_returns(returns)
    sent = [SentimentDay(t, float(s[t, 0]), float(s[t, 1]), gen.e_idio, gen.e_macro)
            for t in range(n)]
    jumps = detect_jumps(returns, params.mu, params.sigma, np.arange(1, n))
    flag = np.zeros(n, dtype=int)
    flag[list(jumps.positive)] = 1
    flag[list(jumps.negative)] = -1
    truth = SyntheticTruth(params, gen, seed, kappa=states[:, 1].copy(), eta=states[:, 2].copy(),
                           eta_idio=states[:, 3].copy(), eta_macro=states[:, 4].copy(),
                           eps=eps, z=z, c_idio=np.full(n, c), jump=flag)
    return bars, sent, truth


def _returns(bars) -> np.ndarray:
    r = np.array([b.log_return for b in bars], dtype=float)
    return r[np.isfinite(r)]


def calibrate(bars, long_history) -> tuple[float, float, float]:
    """``(mu, sigma, nu)``: drift from the long history, volatility and de-drift from ``bars``."""
    train = _returns(bars)
    hist = _returns(long_history)
    if train.shape[0] < 2 or hist.shape[0] < 2:
        raise ValueError("calibration needs at least two returns in each series")
    mu = float(hist.mean())
    sigma = float(train.std(ddof=1))
    if not sigma > 1e-14:
        raise ValueError("training returns are constant: zero volatility")
    nu = float((train - mu).mean())
    return mu, sigma, nu

"""Domain types and the deterministic part of the sentiment-memory jump model.

The filter state is the 5-vector ``[r, kappa, eta, eta_idio, eta_macro]``:
the modeled daily log return, the AR(1) jump amplitude, the combined
sentiment memory and its idiosyncratic and macro components.  Gaussian noise
terms of the return and amplitude equations are not part of the maps here;
they enter the filter through its process-noise covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

STATE_DIM = 5
STATE_FIELDS = ("r", "kappa", "eta", "eta_idio", "eta_macro")


class ModelBlowUp(ArithmeticError):
    """The transition produced non-finite values (parameter blow-up)."""


class Stream(str, Enum):
    IDIO = "idio"
    MACRO = "macro"


@dataclass(frozen=True)
class DailyBar:
    day_index: int
    close: float
    log_return: float = math.nan

    def __post_init__(self):
        if not self.close > 0:
            raise ValueError(f"close must be positive, got {self.close}")


@dataclass(frozen=True)
class SentimentDay:
    day_index: int
    s_idio: float = 0.0
    s_macro: float = 0.0
    e_idio: float = 1.0
    e_macro: float = 1.0

    def __post_init__(self):
        for name in ("e_idio", "e_macro"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class ScoredMessage:
    day_index: int
    stream: Stream
    compound: float
    neutral: float

    def __post_init__(self):
        if not -1.0 <= self.compound <= 1.0:
            raise ValueError(f"compound must lie in [-1, 1], got {self.compound}")
        if not 0.0 <= self.neutral <= 1.0:
            raise ValueError(f"neutral must lie in [0, 1], got {self.neutral}")


@dataclass(frozen=True)
class MemoryParams:
    """Single exponential memory mode; the inclusion factor is ``1 - p``."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"decay factor must lie in [0, 1), got {self.p}")

    @property
    def a(self) -> float:
        return 1.0 - self.p


class WeightMode(str, Enum):
    JENSEN = "jensen"
    FIXED = "fixed"


@dataclass(frozen=True)
class WeightPolicy:
    """How the idiosyncratic/macro memory weights are chosen each day.

    ``JENSEN`` uses Jensen's alpha over the realised return, clamped to
    ``clamp``; ``FIXED`` always returns ``(c_idio, 1 - c_idio)``.
    """

    mode: WeightMode = WeightMode.FIXED
    c_idio: float = 0.5
    clamp: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        lo, hi = self.clamp
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"clamp bounds must satisfy 0 <= lo <= hi <= 1, got {self.clamp}")
        if not 0.0 <= self.c_idio <= 1.0:
            raise ValueError(f"c_idio must lie in [0, 1], got {self.c_idio}")


@dataclass(frozen=True)
class ModelParams:
    """All scalars of the model and of the filter built on top of it.

    ``sigma_z`` defaults to ``sigma`` when left as ``None``.
    """

    mu: float = 0.0
    nu: float = 0.0
    sigma: float = 0.01
    phi: float = 0.5
    g: float = 1.0
    mem_idio: MemoryParams = field(default_factory=lambda: MemoryParams(0.5))
    mem_macro: MemoryParams = field(default_factory=lambda: MemoryParams(0.5))
    kappa0: float = 0.0
    rf_daily: float = 0.0
    beta_window: int = 60
    weights: WeightPolicy = field(default_factory=WeightPolicy)
    sigma_z: float | None = None
    sigma_eps: float = 0.1
    q_eta: float = 1e-4
    r_floor: float = 1e-8
    eps_eta: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.phi < 1.0:
            raise ValueError(f"phi must lie in (0, 1), got {self.phi}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.beta_window < 2:
            raise ValueError(f"beta_window must be >= 2, got {self.beta_window}")
        if not self.eps_eta > 0:
            raise ValueError("eps_eta must be positive")

    @property
    def noise_z(self) -> float:
        return self.sigma if self.sigma_z is None else self.sigma_z

    @property
    def triple(self) -> tuple[float, float, float]:
        return (self.mem_idio.p, self.mem_macro.p, self.phi)

    def with_triple(self, p_idio: float, p_macro: float, phi: float) -> ModelParams:
        return replace(self, mem_idio=MemoryParams(p_idio),
                       mem_macro=MemoryParams(p_macro), phi=phi)


@dataclass(frozen=True)
class ModelState:
    r: float = 0.0
    kappa: float = 0.0
    eta: float = 0.0
    eta_idio: float = 0.0
    eta_macro: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.to_array()):
            raise ModelBlowUp(f"non-finite model state {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.r, self.kappa, self.eta, self.eta_idio, self.eta_macro],
                        dtype=float)

    @classmethod
    def from_array(cls, x) -> ModelState:
        x = np.asarray(x, dtype=float)
        if x.shape != (STATE_DIM,):
            raise ValueError(f"expected a {STATE_DIM}-vector, got shape {x.shape}")
        return cls(*(float(v) for v in x))


def log_returns(closes) -> np.ndarray:
    """``ln(close[t]) - ln(close[t-1])``; one element shorter than ``closes``."""
    lc = np.log(np.asarray(closes, dtype=float))
    return lc[1:] - lc[:-1]


def bars_from_closes(closes) -> list[DailyBar]:
    """Bars indexed from 0; the first bar has no return."""
    closes = np.asarray(closes, dtype=float)
    rets = log_returns(closes)
    bars = [DailyBar(0, float(closes[0]))] if closes.shape[0] else []
    bars.extend(DailyBar(t, float(closes[t]), float(rets[t - 1]))
                for t in range(1, closes.shape[0]))
    return bars


def memory_step(prev: float, s: float, mem: MemoryParams) -> float:
    return mem.p * prev + mem.a * s


def combine_eta(eta_idio: float, eta_macro: float, c_idio: float, c_macro: float) -> float:
    return c_idio * eta_idio + c_macro * eta_macro


def transition_points(points: np.ndarray, s_idio: float, s_macro: float,
                      c_idio: float, c_macro: float, params: ModelParams) -> np.ndarray:
    """Apply the state dynamics row-wise to an ``(k, 5)`` array of states.

    The return row uses the combined memory of the *input* state, so the
    return predicted for the next day depends only on sentiment already
    folded into the memory.  ``s_idio``/``s_macro`` advance the memories.
    """
    points = np.asarray(points, dtype=float)
    kappa = points[:, 1]
    eta_i = params.mem_idio.p * points[:, 3] + params.mem_idio.a * s_idio
    eta_m = params.mem_macro.p * points[:, 4] + params.mem_macro.a * s_macro
    out = np.empty_like(points)
    with np.errstate(over="ignore", invalid="ignore"):
        out[:, 0] = params.mu + kappa * points[:, 2] - params.nu
        out[:, 1] = params.phi * kappa + params.g
        out[:, 2] = c_idio * eta_i + c_macro * eta_m
        out[:, 3] = eta_i
        out[:, 4] = eta_m
        total = out.sum()
    if not np.isfinite(total):
        raise ModelBlowUp("transition produced non-finite state")
    return out


def transition(state: ModelState, u_next: SentimentDay, weights: tuple[float, float],
               params: ModelParams) -> ModelState:
    c_idio, c_macro = weights
    out = transition_points(state.to_array()[None, :], u_next.s_idio, u_next.s_macro,
                            c_idio, c_macro, params)
    return ModelState.from_array(out[0])


def measure_points(points: np.ndarray) -> np.ndarray:
    """Observable coordinates ``(r, kappa)`` of each row."""
    return np.asarray(points, dtype=float)[:, :2]


def measure(state: ModelState) -> tuple[float, float]:
    return (state.r, state.kappa)


def clamp_eta(eta: float, eps_eta: float) -> tuple[float, bool]:
    """Push ``eta`` away from zero to magnitude ``eps_eta``; report whether it moved."""
    if abs(eta) >= eps_eta:
        return eta, False
    return (eps_eta if eta >= 0 else -eps_eta), True


def kappa_star(r_actual: float, eta: float, params: ModelParams,
               eps_eta: float | None = None) -> float:
    """Amplitude implied by an observed return given the lagged memory ``eta``."""
    eps = params.eps_eta if eps_eta is None else eps_eta
    if not eps > 0:
        raise ValueError("eps_eta must be positive")
    denom, _ = clamp_eta(eta, eps)
    return (r_actual - params.mu + params.nu) / denom

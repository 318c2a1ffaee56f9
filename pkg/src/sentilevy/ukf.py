"""Unscented Kalman filter with Van der Merwe scaled sigma points.

Transition and measurement maps are vectorised: they receive an ``(k, n)``
array with one sigma point per row and return ``(k, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable

import numpy as np

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)

PointMap = Callable[[np.ndarray], np.ndarray]


class CovarianceError(np.linalg.LinAlgError):
    """Raised when a covariance cannot be factorised even after jitter."""

    def __init__(self, message: str, matrix: np.ndarray):
        super().__init__(message)
        self.matrix = np.array(matrix, copy=True)


@dataclass(frozen=True)
class SigmaConfig:
    n: int
    alpha_s: float = 0.5
    beta_s: float = 2.0
    kappa_s: float = 0.0
    _weights: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be positive")
        if not 0.0 < self.alpha_s <= 1.0:
            raise ValueError(f"alpha_s must lie in (0, 1], got {self.alpha_s}")
        if not self.n + self.lambda_s > 0:
            raise ValueError("n + lambda_s must be positive")
        c = self.n + self.lambda_s
        w_mean = np.full(2 * self.n + 1, 0.5 / c)
        w_cov = w_mean.copy()
        # lambda/(n+lambda) written as the complement keeps the sum at 1 when alpha is tiny
        w_mean[0] = 1.0 - math.fsum(w_mean[1:])
        w_cov[0] = w_mean[0] + (1.0 - self.alpha_s ** 2 + self.beta_s)
        w_mean.flags.writeable = False
        w_cov.flags.writeable = False
        object.__setattr__(self, "_weights", (w_mean, w_cov))

    @property
    def lambda_s(self) -> float:
        return self.alpha_s ** 2 * (self.n + self.kappa_s) - self.n

    @property
    def w_mean(self) -> np.ndarray:
        return self._weights[0]

    @property
    def w_cov(self) -> np.ndarray:
        return self._weights[1]


@dataclass(frozen=True)
class SigmaSet:
    points: np.ndarray
    w_mean: np.ndarray
    w_cov: np.ndarray


@dataclass(frozen=True)
class NoiseSpec:
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        for name in ("q", "r"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if not np.allclose(m, m.T, atol=1e-9):
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(m).min() < -1e-9:
                raise ValueError(f"{name} is not positive semidefinite")
            object.__setattr__(self, name, m)


@dataclass
class Belief:
    """Gaussian belief: mean vector and covariance matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ValueError(f"covariance shape {self.cov.shape} does not match mean of length {n}")

    def copy(self) -> Belief:
        return Belief(self.mean.copy(), self.cov.copy())


_EYES: dict = {}


def _eye(n: int) -> np.ndarray:
    e = _EYES.get(n)
    if e is None:
        e = _EYES[n] = np.eye(n)
        e.flags.writeable = False
    return e


def cholesky_jitter(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``m``, escalating diagonal jitter on failure."""
    eye = _eye(m.shape[0])
    for j in JITTER_LADDER:
        try:
            return np.linalg.cholesky(m + j * eye if j else m)
        except np.linalg.LinAlgError:
            continue
    raise CovarianceError("covariance not PSD", m)


def sigma_points(mean: np.ndarray, cov: np.ndarray, cfg: SigmaConfig) -> SigmaSet:
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    n = cfg.n
    if mean.shape[0] != n:
        raise ValueError(f"mean has length {mean.shape[0]}, config expects {n}")
    if not np.isfinite(cov.sum()):
        raise CovarianceError("covariance has non-finite entries", cov)
    root = cholesky_jitter((n + cfg.lambda_s) * cov)
    points = np.empty((2 * n + 1, n))
    points[0] = mean
    points[1:n + 1] = mean + root.T
    points[n + 1:] = mean - root.T
    return SigmaSet(points, cfg.w_mean, cfg.w_cov)


def unscented_transform(sigmas: SigmaSet, fn: PointMap,
                        noise: np.ndarray | None = None):
    """Push sigma points through ``fn``; return ``(mean, cov, transformed)``."""
    y = np.asarray(fn(sigmas.points), dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if not np.isfinite(y.sum()):
        raise FloatingPointError("non-finite values from mapped sigma points")
    mean = sigmas.w_mean @ y
    dev = y - mean
    cov = (dev.T * sigmas.w_cov) @ dev
    if noise is not None:
        cov = cov + noise
    return mean, cov, y


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def predict(belief: Belief, dynamics: PointMap, noise_q: np.ndarray,
            cfg: SigmaConfig) -> Belief:
    sigmas = sigma_points(belief.mean, belief.cov, cfg)
    mean, cov, _ = unscented_transform(sigmas, dynamics, noise_q)
    return Belief(mean, _symmetrize(cov))


def _gain(p_xz: np.ndarray, p_z: np.ndarray) -> np.ndarray:
    eye = _eye(p_z.shape[0])
    for j in JITTER_LADDER:
        try:
            k = np.linalg.solve(p_z + j * eye if j else p_z, p_xz.T).T
        except np.linalg.LinAlgError:
            continue
        if np.isfinite(k).all():
            return k
    raise CovarianceError("innovation covariance is singular", p_z)


def update(prior: Belief, measurement_fn: PointMap, z, noise_r: np.ndarray,
           cfg: SigmaConfig, gate: float | None = None):
    """Measurement update; returns ``(posterior, innovation)``.

    With ``gate`` set, an innovation whose squared Mahalanobis distance
    exceeds it is rejected and the prior is returned unchanged.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    sigmas = sigma_points(prior.mean, prior.cov, cfg)
    mu_z, p_z, zs = unscented_transform(sigmas, measurement_fn, noise_r)
    if zs.shape[1] != z.shape[0]:
        raise ValueError(f"measurement has length {z.shape[0]}, map returns {zs.shape[1]}")
    innovation = z - mu_z
    if gate is not None:
        d2 = innovation @ np.linalg.solve(p_z, innovation)
        if d2 > gate:
            return prior.copy(), innovation
    p_xz = ((sigmas.points - prior.mean).T * sigmas.w_cov) @ (zs - mu_z)
    k = _gain(p_xz, p_z)
    mean = prior.mean + k @ innovation
    cov = _symmetrize(prior.cov - k @ p_z @ k.T)
    return Belief(mean, cov), innovation


class UnscentedKalmanFilter:
    """Stateful wrapper holding the current belief of one filter run.

    Not thread-safe; use one instance per thread or process.
    """

    def __init__(self, belief: Belief, cfg: SigmaConfig, gate: float | None = None):
        if belief.mean.shape[0] != cfg.n:
            raise ValueError("belief dimension does not match sigma config")
        self.belief = belief.copy()
        self.cfg = cfg
        self.gate = gate
        self.prior: Belief | None = None
        self.innovation: np.ndarray | None = None

    def predict(self, dynamics: PointMap, noise_q: np.ndarray) -> Belief:
        self.prior = predict(self.belief, dynamics, noise_q, self.cfg)
        self.belief = self.prior
        return self.prior

    def update(self, measurement_fn: PointMap, z, noise_r: np.ndarray) -> Belief:
        self.belief, self.innovation = update(self.belief, measurement_fn, z, noise_r,
                                              self.cfg, self.gate)
        return self.belief

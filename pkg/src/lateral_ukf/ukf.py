"""Fixed-dimension unscented Kalman filter with additive noise.

Scaled sigma points, a Cholesky square root with a small jitter ladder,
and measurement updates that can be applied one source at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

JITTER_LADDER = (1e-9, 1e-8, 1e-7)
MAX_INNOVATION_COND = 1e12


class CovarianceError(ArithmeticError):
    """The covariance could not be factorized even after jitter."""


class SingularInnovationError(ArithmeticError):
    """Innovation covariance is too ill-conditioned to invert."""


class NonFiniteError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianEstimate:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean of size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class SigmaConfig:
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    def lam(self, n: int) -> float:
        lam = self.alpha**2 * (n + self.kappa) - n
        if not n + lam > 0:
            raise ValueError(f"n + lambda must be positive (n={n}, lambda={lam})")
        return lam

    def weights(self, n: int):
        """Mean and covariance weights for 2n+1 points."""
        lam = self.lam(n)
        wm = np.full(2 * n + 1, 0.5 / (n + lam))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + (1.0 - self.alpha**2 + self.beta)
        return wm, wc


def symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def _cholesky(a: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(a.shape[0])
    for eps in JITTER_LADDER:
        try:
            return np.linalg.cholesky(a + eps * eye)
        except np.linalg.LinAlgError:
            continue
    raise CovarianceError("covariance is not positive definite after jitter")


def generate_sigma_points(est: GaussianEstimate, cfg: SigmaConfig):
    """Return (points, wm, wc); points has shape (2n+1, n)."""
    n = est.dim
    lam = cfg.lam(n)
    if not np.all(np.isfinite(est.cov)):
        raise CovarianceError("non-finite covariance")
    sqrt_cov = _cholesky((n + lam) * symmetrize(est.cov))
    points = np.empty((2 * n + 1, n))
    points[0] = est.mean
    points[1 : n + 1] = est.mean + sqrt_cov.T
    points[n + 1 :] = est.mean - sqrt_cov.T
    wm, wc = cfg.weights(n)
    return points, wm, wc


def _moments(y: np.ndarray, wm: np.ndarray, wc: np.ndarray):
    mean = wm @ y
    dev = y - mean
    return mean, (dev.T * wc) @ dev


def unscented_transform(est: GaussianEstimate, fn, cfg: SigmaConfig, vectorized: bool = False):
    """Propagate `est` through `fn`; returns (mean, cov, sigma points, images)."""
    points, wm, wc = generate_sigma_points(est, cfg)
    y = np.asarray(fn(points), dtype=float) if vectorized else np.array([fn(p) for p in points], dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    mean, cov = _moments(y, wm, wc)
    return mean, cov, points, y


def predict(
    est: GaussianEstimate,
    process_fn: Callable,
    u,
    q_diag,
    cfg: SigmaConfig,
    vectorized: bool = False,
) -> GaussianEstimate:
    """Time update with additive process noise diag(q_diag).

    `process_fn(x, u)` maps one state to the next; with `vectorized=True` it
    receives all sigma points at once as a (2n+1, n) array.
    """
    points, wm, wc = generate_sigma_points(est, cfg)
    if vectorized:
        y = np.asarray(process_fn(points, u), dtype=float)
    else:
        y = np.array([process_fn(p, u) for p in points], dtype=float)
    if y.shape != points.shape:
        raise ValueError(f"process function returned shape {y.shape}, expected {points.shape}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteError("process function produced non-finite values")
    mean, cov = _moments(y, wm, wc)
    cov = symmetrize(cov + np.diag(np.asarray(q_diag, dtype=float)))
    return GaussianEstimate(mean, cov)


@dataclass(frozen=True)
class MeasurementPrediction:
    z_pred: np.ndarray
    p_zz: np.ndarray  # includes R
    p_xz: np.ndarray

    def innovation(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) - self.z_pred

    def mahalanobis(self, z) -> float:
        nu = self.innovation(z)
        return float(np.sqrt(nu @ np.linalg.solve(self.p_zz, nu)))


def predict_measurement(est: GaussianEstimate, h: Callable, r_diag, cfg: SigmaConfig) -> MeasurementPrediction:
    points, wm, wc = generate_sigma_points(est, cfg)
    zs = np.array([np.atleast_1d(h(p)) for p in points], dtype=float)
    z_pred = wm @ zs
    dz = zs - z_pred
    dx = points - est.mean
    p_zz = (dz.T * wc) @ dz + np.diag(np.asarray(r_diag, dtype=float))
    p_xz = (dx.T * wc) @ dz
    return MeasurementPrediction(z_pred, symmetrize(p_zz), p_xz)


def correct(est: GaussianEstimate, mp: MeasurementPrediction, z) -> GaussianEstimate:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("measurement contains non-finite values")
    if np.linalg.cond(mp.p_zz) > MAX_INNOVATION_COND:
        raise SingularInnovationError("innovation covariance is singular")
    # K = P_xz P_zz^-1, solved rather than inverted
    gain = np.linalg.solve(mp.p_zz, mp.p_xz.T).T
    mean = est.mean + gain @ (z - mp.z_pred)
    cov = symmetrize(est.cov - gain @ mp.p_zz @ gain.T)
    return GaussianEstimate(mean, cov)


def update(est: GaussianEstimate, h: Callable, z, r_diag, cfg: SigmaConfig) -> GaussianEstimate:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("measurement contains non-finite values")
    return correct(est, predict_measurement(est, h, r_diag, cfg), z)

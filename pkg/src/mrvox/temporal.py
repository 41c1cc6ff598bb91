"""Per-voxel temporal fitting.

Each voxel's series is modeled as a 6-column regression mean plus stationary
AR(2) noise. The AR parameters are estimated by maximizing the exact Gaussian
likelihood with the mean profiled out by generalized least squares; the
whitened representation keeps every evaluation O(T).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError, NonStationaryError
from .numerics import SimplexConfig, nelder_mead

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Ar2Params:
    """Stationary AR(2) coefficients and innovation variance."""

    phi1: float
    phi2: float
    sigma2: float

    def __post_init__(self):
        if not (self.phi1 + self.phi2 < 1.0 and self.phi2 - self.phi1 < 1.0
                and abs(self.phi2) < 1.0):
            raise NonStationaryError(
                f"({self.phi1}, {self.phi2}) outside the AR(2) stationarity triangle")
        if not self.sigma2 > 0:
            raise NonStationaryError("innovation variance must be positive")


@dataclass(frozen=True)
class VoxelFit:
    """Mean coefficients, AR(2) noise parameters, and the attained loglik."""

    beta: np.ndarray
    ar: Ar2Params
    loglik: float


def ar2_autocovariance(ar: Ar2Params, max_lag: int) -> np.ndarray:
    """Autocovariances gamma(0..max_lag) from the Yule-Walker equations."""
    p1, p2, s2 = ar.phi1, ar.phi2, ar.sigma2
    gamma = np.empty(max_lag + 1)
    gamma[0] = s2 * (1.0 - p2) / ((1.0 + p2) * (1.0 - p2 - p1) * (1.0 - p2 + p1))
    if max_lag >= 1:
        gamma[1] = p1 * gamma[0] / (1.0 - p2)
    for k in range(2, max_lag + 1):
        gamma[k] = p1 * gamma[k - 1] + p2 * gamma[k - 2]
    return gamma


def _whiten(ar: Ar2Params, arr: np.ndarray) -> tuple[np.ndarray, float]:
    """Apply the exact stationary AR(2) whitening transform along axis 0.

    Returns the whitened array and log|K| of the implied T x T covariance.
    The first two rows use the stationary initial distribution; the rest are
    scaled one-step innovations.
    """
    gamma = ar2_autocovariance(ar, 1)
    g0, g1 = gamma[0], gamma[1]
    rho1 = g1 / g0
    v2 = g0 * (1.0 - rho1 ** 2)
    sig = np.sqrt(ar.sigma2)

    arr = np.asarray(arr, dtype=float)
    T = arr.shape[0]
    out = np.empty_like(arr)
    out[0] = arr[0] / np.sqrt(g0)
    out[1] = (arr[1] - rho1 * arr[0]) / np.sqrt(v2)
    out[2:] = (arr[2:] - ar.phi1 * arr[1:-1] - ar.phi2 * arr[:-2]) / sig
    logdet = np.log(g0) + np.log(v2) + (T - 2) * np.log(ar.sigma2)
    return out, logdet


def gls_beta(ar: Ar2Params, y: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Generalized least squares coefficients under the AR(2) covariance."""
    yw, _ = _whiten(ar, np.asarray(y, dtype=float))
    Xw, _ = _whiten(ar, np.asarray(X, dtype=float))
    beta, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < X.shape[1]:
        raise FitError("whitened design is rank deficient")
    return beta


def profile_loglik(ar: Ar2Params, y: np.ndarray, X: np.ndarray) -> float:
    """Exact Gaussian log-likelihood with the mean profiled out by GLS."""
    y = np.asarray(y, dtype=float)
    T = y.shape[0]
    yw, logdet = _whiten(ar, y)
    Xw, _ = _whiten(ar, np.asarray(X, dtype=float))
    beta, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < X.shape[1]:
        raise FitError("whitened design is rank deficient")
    rss = float(np.sum((yw - Xw @ beta) ** 2))
    return -0.5 * (T * _LOG_2PI + logdet + rss)


def _pack(phi1: float, phi2: float, sigma2: float) -> np.ndarray:
    # partial autocorrelations give a smooth bijection onto the triangle
    pi2 = phi2
    pi1 = phi1 / (1.0 - phi2)
    pi = np.clip([pi1, pi2], -0.99, 0.99)
    return np.array([np.arctanh(pi[0]), np.arctanh(pi[1]), np.log(sigma2)])


def _unpack(u: np.ndarray) -> Ar2Params:
    pi1, pi2 = np.tanh(u[0]), np.tanh(u[1])
    return Ar2Params(phi1=float(pi1 * (1.0 - pi2)), phi2=float(pi2),
                     sigma2=float(np.exp(u[2])))


def fit_voxel(y: np.ndarray, X: np.ndarray,
              config: SimplexConfig | None = None) -> VoxelFit:
    """Maximize the profile likelihood over (phi1, phi2, sigma2).

    The optimizer runs in an unconstrained space that maps exactly onto the
    stationarity triangle (partial autocorrelations) and a log innovation
    variance, so the returned parameters always satisfy the constraints.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(y)):
        raise FitError("series contains non-finite values")

    beta0, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta0
    v = float(np.var(resid))
    if v <= 0 or not np.isfinite(v):
        raise FitError("degenerate series: residual variance is zero")
    r1 = float(resid[1:] @ resid[:-1]) / (resid.size * v)
    r2 = float(resid[2:] @ resid[:-2]) / (resid.size * v)
    pi1 = np.clip(r1, -0.9, 0.9)
    pi2 = np.clip((r2 - r1 ** 2) / max(1.0 - r1 ** 2, 1e-6), -0.9, 0.9)
    s2_0 = max(v * (1.0 - pi1 ** 2) * (1.0 - pi2 ** 2), 1e-12 * v)
    x0 = np.array([np.arctanh(pi1), np.arctanh(pi2), np.log(s2_0)])

    def objective(u):
        try:
            return -profile_loglik(_unpack(u), y, X)
        except (FloatingPointError, FitError):
            return np.inf

    u_min, f_min = nelder_mead(objective, x0, config or SimplexConfig())
    if not np.isfinite(f_min):
        raise FitError("profile likelihood non-finite at every optimizer restart")
    ar = _unpack(u_min)
    return VoxelFit(beta=gls_beta(ar, y, X), ar=ar, loglik=-f_min)


def standardized_residuals(series: np.ndarray, X: np.ndarray,
                           fits: list[VoxelFit]) -> np.ndarray:
    """Detrend, AR-filter, and scale each voxel series; drops t = 1, 2.

    Returns a V x (T-2) matrix whose rows are approximately unit-variance
    innovations when the model holds.
    """
    series = np.asarray(series, dtype=float)
    V, T = series.shape
    if len(fits) != V:
        raise FitError("one VoxelFit per voxel is required")
    e = np.empty((V, T - 2))
    for v, fit in enumerate(fits):
        detr = series[v] - X @ fit.beta
        e[v] = (detr[2:] - fit.ar.phi1 * detr[1:-1] - fit.ar.phi2 * detr[:-2]) \
            / np.sqrt(fit.ar.sigma2)
    return e

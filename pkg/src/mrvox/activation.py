"""Voxel-level activation testing.

The task coefficient is re-estimated per region with a spatially varying
Fourier parameterization, holding the stage-1 nuisance mean fixed, under a
separable space-time covariance (per-voxel AR whitening, fitted spatial
covariance across voxels). Each voxel's task-minus-rest contrast gets a
normal test, and rejections are controlled by the Benjamini-Hochberg
step-up rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .errors import MrvoxError, RankDeficientDesignError
from .numerics import _cholesky_with_jitter
from .temporal import Ar2Params


@dataclass(frozen=True)
class ActivationConfig:
    n_harmonics: int = 1
    q: float = 0.05  # FDR level

    def __post_init__(self):
        if self.n_harmonics < 1:
            raise MrvoxError("n_harmonics must be >= 1")
        if not 0.0 < self.q < 1.0:
            raise MrvoxError("q must lie in (0, 1)")


@dataclass(frozen=True)
class RoiActivation:
    """GLS coefficients for one region: Fourier task coefficients plus the
    constant rest coefficient, with their covariance and the basis."""

    theta: np.ndarray
    theta_cov: np.ndarray
    basis: np.ndarray


@dataclass(frozen=True)
class ActivationFit:
    """Per-region coefficient fits and the pooled voxel-level test table."""

    rois: dict
    contrast: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    reject: np.ndarray
    q: float


def fourier_basis(coords: np.ndarray, n_harmonics: int = 1) -> np.ndarray:
    """Cosine/sine columns in the coordinates normalized to the region box.

    Axes the region does not span contribute nothing; columns that come out
    constant on the grid (e.g. the sine on a 3-level axis, which vanishes at
    0, 1/2, 1) are dropped, and duplicated constant columns are kept once.
    """
    coords = np.asarray(coords, dtype=float)
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    cols = []
    for b in range(3):
        if hi[b] <= lo[b]:
            continue
        u = (coords[:, b] - lo[b]) / (hi[b] - lo[b])
        for n in range(1, n_harmonics + 1):
            cols.append(np.cos(2.0 * np.pi * n * u))
            cols.append(np.sin(2.0 * np.pi * n * u))
    kept = []
    for col in cols:
        if np.ptp(col) < 1e-12 and abs(col[0]) < 1e-12:
            continue  # identically zero on this grid
        if any(np.allclose(col, k, atol=1e-12) for k in kept):
            continue
        kept.append(col)
    if not kept:
        raise MrvoxError("region is degenerate on every axis")
    return np.column_stack(kept)


def _whiten_conditional(arr: np.ndarray, ar: Ar2Params) -> np.ndarray:
    """One-step AR(2) innovations of a series, t = 3..T, unit variance."""
    return (arr[2:] - ar.phi1 * arr[1:-1] - ar.phi2 * arr[:-2]) / np.sqrt(ar.sigma2)


def fit_activation(series: np.ndarray, X: np.ndarray, beta_fixed: np.ndarray,
                   ars: list[Ar2Params], spatial_cov: np.ndarray,
                   coords: np.ndarray,
                   config: ActivationConfig | None = None) -> RoiActivation:
    """GLS refit of the task and rest coefficients for one region.

    Parameters
    ----------
    series : (n, T) raw region data
    X : (T, 6) design matrix; columns 4 and 5 are the task/rest regressors
    beta_fixed : (n, 4) stage-1 coefficients of the four nuisance columns
    ars : per-voxel AR(2) parameters from stage 1
    spatial_cov : (n, n) fitted innovation covariance across the region
    coords : (n, 3) voxel grid coordinates
    """
    config = config or ActivationConfig()
    series = np.asarray(series, dtype=float)
    n, T = series.shape
    B = fourier_basis(coords, config.n_harmonics)
    q = B.shape[1]

    detr = series - beta_fixed @ X[:, :4].T
    x1, x2 = X[:, 4], X[:, 5]
    m = T - 2
    d = np.empty((n, m))
    w1 = np.empty((n, m))
    w2 = np.empty((n, m))
    for v in range(n):
        d[v] = _whiten_conditional(detr[v], ars[v])
        w1[v] = _whiten_conditional(x1, ars[v])
        w2[v] = _whiten_conditional(x2, ars[v])

    chol, _ = _cholesky_with_jitter(spatial_cov)
    M = np.zeros((q + 1, q + 1))
    rhs = np.zeros(q + 1)
    for t in range(m):
        Z = np.empty((n, q + 1))
        Z[:, :q] = B * w1[:, t][:, None]
        Z[:, q] = w2[:, t]
        PZ = linalg.cho_solve((chol, True), Z)
        M += Z.T @ PZ
        rhs += PZ.T @ d[:, t]

    try:
        M_chol = linalg.cholesky(M, lower=True)
    except linalg.LinAlgError:
        raise RankDeficientDesignError("stacked activation design is rank deficient")
    theta = linalg.cho_solve((M_chol, True), rhs)
    cov = linalg.cho_solve((M_chol, True), np.eye(q + 1))
    return RoiActivation(theta=theta, theta_cov=cov, basis=B)


def voxel_tests(fit: RoiActivation, B: np.ndarray | None = None):
    """Per-voxel contrast, its standard error, z-value, and two-sided p-value.

    The contrast compares the voxel's task coefficient B(v) theta_task against
    the shared rest coefficient.
    """
    B = fit.basis if B is None else B
    n, q = B.shape
    C = np.column_stack([B, -np.ones(n)])
    contrast = C @ fit.theta
    var = np.einsum("ij,jk,ik->i", C, fit.theta_cov, C)
    if np.any(var <= 0):
        raise MrvoxError("nonpositive contrast variance")
    se = np.sqrt(var)
    z = contrast / se
    p = special.erfc(np.abs(z) / np.sqrt(2.0))
    return contrast, se, z, p


def bh_fdr(pvalues: np.ndarray, q: float) -> np.ndarray:
    """Benjamini-Hochberg step-up rejection mask at level q."""
    p = np.asarray(pvalues, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise MrvoxError("p-values must lie in [0, 1]")
    m = p.size
    order = np.sort(p)
    thresh = q * np.arange(1, m + 1) / m
    passing = np.nonzero(order <= thresh)[0]
    if passing.size == 0:
        return np.zeros(m, dtype=bool)
    cutoff = order[passing[-1]]
    return p <= cutoff

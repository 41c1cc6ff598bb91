"""Shared numeric kernels.

Derivative-free simplex minimization, natural cubic smoothing spline, and a
Cholesky-based Gaussian log-likelihood used by every likelihood in the
package.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import MrvoxError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimplexConfig:
    """Stopping rules for the simplex minimizer.

    Convergence requires the simplex diameter to fall below ``x_tol`` and the
    function spread below ``f_tol``; after each convergence the simplex is
    rebuilt at the incumbent and rerun, ``restart_count`` times in total.
    """

    x_tol: float = 1e-6
    f_tol: float = 1e-8
    max_iter: int = 2000
    restart_count: int = 2

    def __post_init__(self):
        if self.x_tol <= 0 or self.f_tol <= 0 or self.max_iter <= 0 or self.restart_count < 0:
            raise ValueError("SimplexConfig entries must be positive")


def _initial_simplex(x0: np.ndarray) -> np.ndarray:
    # x0 plus a 5% perturbation per axis (0.05 absolute for zero coordinates)
    n = x0.size
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += 0.05 * abs(x0[i]) if x0[i] != 0.0 else 0.05
    return simplex

def _simplex_run(objective, simplex, fvals, config):
    """One Nelder-Mead run with standard coefficients (1, 2, 0.5, 0.5)."""
    n = simplex.shape[1]
    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5

    def f(x):
        v = objective(x)
        return v if np.isfinite(v) else np.inf

    for _ in range(config.max_iter):
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diam = np.max(np.abs(simplex[1:] - simplex[0]))
        fspread = fvals[-1] - fvals[0] if np.isfinite(fvals[-1]) else np.inf
        if diam < config.x_tol and fspread < config.f_tol:
            break
        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + alpha * (centroid - simplex[-1])
        fr = f(xr)
        if fr < fvals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + rho * (xr - centroid)
            else:
                xc = centroid + rho * (simplex[-1] - centroid)
            fc = f(xc)
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
                    fvals[i] = f(simplex[i])
    order = np.argsort(fvals, kind="stable")
    return simplex[order], fvals[order]


def nelder_mead(objective, x0, config: SimplexConfig | None = None):
    """Minimize ``objective`` from ``x0`` by the Nelder-Mead simplex method.

    Parameters
    ----------
    objective : callable
        Maps an n-vector to a scalar. Non-finite values away from ``x0`` are
        treated as +inf barriers.
    x0 : array_like
        Starting point; the objective must be finite here.
    config : SimplexConfig, optional

    Returns
    -------
    x_min : ndarray
    f_min : float
    """
    config = config or SimplexConfig()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    f0 = float(objective(x0))
    if not np.isfinite(f0):
        raise MrvoxError("objective is non-finite at the starting point")

    best_x, best_f = x0.copy(), f0
    start = x0
    for _ in range(config.restart_count + 1):
        simplex = _initial_simplex(start)
        fvals = np.array([f0 if np.array_equal(v, x0) else objective(v) for v in simplex])
        fvals[~np.isfinite(fvals)] = np.inf
        simplex, fvals = _simplex_run(objective, simplex, fvals, config)
        if fvals[0] < best_f:
            best_x, best_f = simplex[0].copy(), float(fvals[0])
        start = best_x
        f0 = best_f
    return best_x, best_f


def smoothing_spline(xs, ys, p: float):
    """Natural cubic smoothing spline evaluated at the data abscissas.

    Minimizes ``p * sum((ys - g(xs))**2) + (1 - p) * integral(g'')**2`` over
    natural cubic splines g, so p=1 interpolates and p=0 returns the
    least-squares straight line.

    Parameters
    ----------
    xs : array_like, strictly increasing, length >= 4
    ys : array_like, same length
    p : float in [0, 1]

    Returns
    -------
    fitted : ndarray, g evaluated at xs
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    m = xs.size
    if m < 4:
        raise MrvoxError("smoothing_spline needs at least 4 points")
    if ys.size != m:
        raise MrvoxError("xs and ys must have equal length")
    if np.any(np.diff(xs) <= 0):
        raise MrvoxError("xs must be strictly increasing")
    if not 0.0 <= p <= 1.0:
        raise MrvoxError("p must lie in [0, 1]")

    if p == 0.0:
        # Roughness term alone; the limit is the least-squares line.
        coef = np.polyfit(xs, ys, 1)
        return np.polyval(coef, xs)
    if p == 1.0:
        return ys.copy()

    h = np.diff(xs)
    # Q: m x (m-2) second-difference matrix, R: (m-2) x (m-2) Gram matrix of
    # the natural-spline roughness (Green & Silverman parameterization).
    k = m - 2
    Q = np.zeros((m, k))
    for j in range(k):
        Q[j, j] = 1.0 / h[j]
        Q[j + 1, j] = -1.0 / h[j] - 1.0 / h[j + 1]
        Q[j + 2, j] = 1.0 / h[j + 1]
    R_diag = (h[:-1] + h[1:]) / 3.0
    R_off = h[1:-1] / 6.0

    lam = (1.0 - p) / p
    # Solve (R + lam * Q^T Q) u = Q^T y; fitted = y - lam * Q u.
    M = lam * (Q.T @ Q)
    M[np.arange(k), np.arange(k)] += R_diag
    if k > 1:
        M[np.arange(k - 1), np.arange(1, k)] += R_off
        M[np.arange(1, k), np.arange(k - 1)] += R_off
    u = linalg.solve(M, Q.T @ ys, assume_a="pos")
    return ys - lam * (Q @ u)


def _cholesky_with_jitter(cov: np.ndarray):
    """Lower Cholesky factor, retrying with growing diagonal jitter.

    Returns (factor, jitter_used). Raises NotPositiveDefiniteError after the
    retries are exhausted.
    """
    base = 1e-8 * float(np.mean(np.diag(cov)))
    if base <= 0 or not np.isfinite(base):
        base = 1e-8
    jitter = 0.0
    for attempt in range(4):
        try:
            chol = linalg.cholesky(cov if jitter == 0.0 else cov + jitter * np.eye(cov.shape[0]),
                                   lower=True)
            if jitter > 0.0:
                logger.debug("cholesky succeeded with jitter %.3e", jitter)
            return chol, jitter
        except linalg.LinAlgError:
            jitter = base * 10.0 ** attempt
    raise NotPositiveDefiniteError("matrix not positive definite after jitter retries")


def gaussian_loglik(cov: np.ndarray, data: np.ndarray) -> float:
    """Sum of zero-mean Gaussian log-densities of the columns of ``data``.

    ``cov`` is a symmetric n x n covariance shared by the m independent
    columns. Factorization failures are retried with diagonal jitter
    (1e-8 * mean diagonal, growing tenfold, up to 3 retries).
    """
    cov = np.asarray(cov, dtype=float)
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n, m = data.shape
    if cov.shape != (n, n):
        raise MrvoxError("cov and data dimensions disagree")
    chol, _ = _cholesky_with_jitter(cov)
    z = linalg.solve_triangular(chol, data, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return float(-0.5 * m * (n * np.log(2.0 * np.pi) + logdet) - 0.5 * np.sum(z * z))

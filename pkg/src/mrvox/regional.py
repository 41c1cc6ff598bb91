"""Sparse precision estimation for region-mean residuals.

Block coordinate descent on the l1-penalized Gaussian log-likelihood
(diagonal unpenalized), a seeded train/test cross-validation over a penalty
grid, and edge-list extraction for the resulting conditional-dependence
graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, MrvoxError
from .parallel import rng_stream

KKT_TOL = 1e-5


@dataclass(frozen=True)
class RegionalResiduals:
    """Region-mean standardized residuals, one row per region."""

    ebar: np.ndarray

    def __post_init__(self):
        if self.ebar.ndim != 2 or self.ebar.shape[0] < 2:
            raise MrvoxError("need residual rows for at least 2 regions")
        if not np.all(np.isfinite(self.ebar)):
            raise MrvoxError("residuals contain non-finite values")


@dataclass(frozen=True)
class GlassoResult:
    W: np.ndarray
    lam: float
    nnz_offdiag: int
    objective: float


@dataclass(frozen=True)
class CvConfig:
    lambda_grid: np.ndarray = field(
        default_factory=lambda: np.geomspace(1.0, 1e-4, 17))
    train_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self):
        grid = np.asarray(self.lambda_grid, dtype=float)
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
            raise MrvoxError("lambda_grid must be decreasing and positive")
        object.__setattr__(self, "lambda_grid", grid)


def roi_means(e: np.ndarray, roi_labels: np.ndarray) -> RegionalResiduals:
    """Average the voxel residual rows within each region label (1..R)."""
    e = np.asarray(e, dtype=float)
    roi_labels = np.asarray(roi_labels, dtype=int)
    R = roi_labels.max()
    ebar = np.empty((R, e.shape[1]))
    for r in range(1, R + 1):
        rows = e[roi_labels == r]
        if rows.shape[0] == 0:
            raise MrvoxError(f"region {r} has no voxels")
        ebar[r - 1] = rows.mean(axis=0)
    return RegionalResiduals(ebar=ebar)


def sample_cov(ebar: np.ndarray) -> np.ndarray:
    """Second-moment matrix (1/m) sum_t ebar(t) ebar(t)' over the columns."""
    ebar = np.asarray(ebar, dtype=float)
    if ebar.shape[1] < 2:
        raise MrvoxError("need at least 2 time columns")
    return ebar @ ebar.T / ebar.shape[1]


def kkt_residual(W: np.ndarray, A: np.ndarray, lam: float) -> float:
    """Largest stationarity violation of the penalized likelihood at W."""
    sigma = np.linalg.inv(W)
    R = A.shape[0]
    resid = 0.0
    for i in range(R):
        resid = max(resid, abs(sigma[i, i] - A[i, i]))
        for j in range(i + 1, R):
            gap = sigma[i, j] - A[i, j]
            if W[i, j] == 0.0:
                resid = max(resid, abs(gap) - lam)
            else:
                resid = max(resid, abs(gap - lam * np.sign(W[i, j])))
    return resid


def _glasso_objective(W: np.ndarray, A: np.ndarray, lam: float) -> float:
    sign, logdet = np.linalg.slogdet(W)
    if sign <= 0:
        return -np.inf
    penalty = lam * (np.abs(W).sum() - np.abs(np.diag(W)).sum())
    return logdet - float(np.sum(W * A)) - penalty


def glasso(A: np.ndarray, lam: float, max_sweeps: int = 500) -> GlassoResult:
    """Maximize log|W| - tr(WA) - lam * sum_{r != r'} |W_rr'| over SPD W.

    Friedman-style block coordinate descent with an inner soft-threshold
    lasso per column; iterates until the KKT residual drops below 1e-5.
    """
    A = np.asarray(A, dtype=float)
    R = A.shape[0]
    if A.shape != (R, R) or not np.allclose(A, A.T, atol=1e-12):
        raise MrvoxError("A must be square symmetric")
    if lam < 0:
        raise MrvoxError("lambda must be nonnegative")
    if np.any(np.diag(A) <= 0):
        raise MrvoxError("A must have positive diagonal")

    # working covariance; the diagonal is fixed by the unpenalized-diagonal
    # stationarity condition
    sigma = A.copy()
    eigmin = float(np.linalg.eigvalsh(A).min())
    if eigmin < 1e-10 * float(np.diag(A).mean()):
        jitter = 1e-8 * float(np.diag(A).mean()) - min(eigmin, 0.0)
        sigma += jitter * np.eye(R)
    betas = np.zeros((R, R))
    inner_tol = min(1e-9, 1e-4 * KKT_TOL)

    W = None
    for _ in range(max_sweeps):
        for j in range(R):
            idx = np.arange(R) != j
            S11 = sigma[np.ix_(idx, idx)]
            s12 = A[idx, j]
            beta = betas[idx, j].copy()
            grad = S11 @ beta
            for _inner in range(1000):
                delta = 0.0
                for k in range(R - 1):
                    old = beta[k]
                    z = s12[k] - grad[k] + S11[k, k] * old
                    new = np.sign(z) * max(abs(z) - lam, 0.0) / S11[k, k]
                    if new != old:
                        grad += (new - old) * S11[:, k]
                        beta[k] = new
                        delta = max(delta, abs(new - old))
                if delta < inner_tol:
                    break
            betas[idx, j] = beta
            sigma[idx, j] = S11 @ beta
            sigma[j, idx] = sigma[idx, j]
        W = _recover_precision(sigma, A, betas)
        if kkt_residual(W, A, lam) <= KKT_TOL:
            break
    else:
        raise ConvergenceError(f"glasso did not converge in {max_sweeps} sweeps")

    nnz = int(np.count_nonzero(W) - R)
    return GlassoResult(W=W, lam=float(lam), nnz_offdiag=nnz,
                        objective=_glasso_objective(W, A, lam))


def _recover_precision(sigma: np.ndarray, A: np.ndarray, betas: np.ndarray) -> np.ndarray:
    R = sigma.shape[0]
    W = np.zeros((R, R))
    for j in range(R):
        idx = np.arange(R) != j
        beta = betas[idx, j]
        w22 = 1.0 / (sigma[j, j] - float(sigma[idx, j] @ beta))
        W[j, j] = w22
        W[idx, j] = -beta * w22
    return (W + W.T) / 2.0


def cv_lambda(residuals: RegionalResiduals | np.ndarray, config: CvConfig):
    """Select the penalty by a seeded 90/10 split in time.

    The precision is fitted on the training covariance for each grid value;
    each region of each held-out column is then predicted from the others by
    the conditional Gaussian mean, and the penalty minimizing the summed
    squared error wins (ties go to the larger penalty).
    """
    ebar = residuals.ebar if isinstance(residuals, RegionalResiduals) else np.asarray(residuals)
    R, m = ebar.shape
    rng = rng_stream(config.seed)
    n_test = max(1, int(round((1.0 - config.train_fraction) * m)))
    test_idx = np.sort(rng.choice(m, size=n_test, replace=False))
    train_mask = np.ones(m, dtype=bool)
    train_mask[test_idx] = False
    A_train = sample_cov(ebar[:, train_mask])
    test = ebar[:, test_idx]

    sse = np.full(config.lambda_grid.size, np.inf)
    for i, lam in enumerate(config.lambda_grid):
        try:
            W = glasso(A_train, lam).W
        except (ConvergenceError, MrvoxError):
            continue
        err = 0.0
        for r in range(R):
            others = np.arange(R) != r
            pred = -(W[r, others] @ test[others]) / W[r, r]
            err += float(np.sum((test[r] - pred) ** 2))
        sse[i] = err
    if not np.any(np.isfinite(sse)):
        raise ConvergenceError("every penalty in the grid failed to fit")

    best = np.min(sse)
    ties = np.nonzero(sse <= best + 1e-12)[0]
    # grid is decreasing, so the smallest index among ties is the largest lambda
    lam_hat = float(config.lambda_grid[ties[0]])
    return lam_hat, sse


def edges(W: np.ndarray, threshold: float = 0.0):
    """Off-diagonal entries above the magnitude threshold, strongest first.

    Regions are reported with 1-based labels; each undirected pair appears
    once.
    """
    R = W.shape[0]
    out = []
    for i in range(R):
        for j in range(i + 1, R):
            if abs(W[i, j]) > threshold:
                out.append((i + 1, j + 1, float(W[i, j])))
    out.sort(key=lambda e: -abs(e[2]))
    return out

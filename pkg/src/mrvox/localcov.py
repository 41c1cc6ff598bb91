"""Within-region spatial covariance.

A region's innovation field is a weighted mixture of independent
geometrically anisotropic Matern processes, one per subregion, plus a
diagonal term scaled by the mixing weight. Distances are measured in voxel
units after rotating and scaling by the ellipsoid axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from .errors import FitError, MrvoxError
from .numerics import SimplexConfig, _cholesky_with_jitter, nelder_mead

NU_BOUNDS = (0.05, 5.0)
LENGTH_FLOOR = 0.1


@dataclass(frozen=True)
class AnisoParams:
    """Matern smoothness plus ellipsoid axes and rotation angles.

    The Matern scale is fixed at 1; the axis lengths carry all distance
    scaling. Angles are radians in [0, pi).
    """

    nu: float
    lengths: tuple[float, float, float]
    xi1: float = 0.0
    xi2: float = 0.0
    theta: float = 1.0

    def __post_init__(self):
        if self.nu <= 0 or self.theta <= 0 or any(l <= 0 for l in self.lengths):
            raise MrvoxError("AnisoParams requires positive nu, theta, lengths")
        if not (0.0 <= self.xi1 < np.pi and 0.0 <= self.xi2 < np.pi):
            raise MrvoxError("angles must lie in [0, pi)")


@dataclass(frozen=True)
class SubregionPartition:
    """Assignment of a region's voxels to subregions, with centroids."""

    assignment: np.ndarray  # 0-based subregion label per voxel
    centroids: np.ndarray   # L x 3 mean grid coordinates

    def __post_init__(self):
        labels = np.unique(self.assignment)
        L = self.centroids.shape[0]
        if labels.size != L or labels[0] != 0 or labels[-1] != L - 1:
            raise MrvoxError("subregion labels must be contiguous 0..L-1")

    @property
    def n_subregions(self) -> int:
        return self.centroids.shape[0]

    @classmethod
    def from_assignment(cls, voxels: np.ndarray, assignment: np.ndarray) -> "SubregionPartition":
        assignment = np.asarray(assignment, dtype=int)
        L = int(assignment.max()) + 1
        cents = np.empty((L, 3))
        for l in range(L):
            cents[l] = np.asarray(voxels, dtype=float)[assignment == l].mean(axis=0)
        return cls(assignment=assignment, centroids=cents)


@dataclass(frozen=True)
class RoiCovModel:
    """Fitted within-region covariance: partition, Matern mixture, nugget weight.

    ``scale`` is the profiled overall variance of the fitted model. The
    voxel-wise standardization in the temporal stage absorbs the innovation
    scale, so without this free factor the likelihood could only match the
    residual variance at the omega boundaries.
    """

    partition: SubregionPartition
    params: tuple[AnisoParams, ...]
    omega: float
    sigma1: np.ndarray
    loglik: float = field(default=float("nan"))
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise MrvoxError("omega must lie in [0, 1]")
        if not self.scale > 0:
            raise MrvoxError("scale must be positive")

    def error_cov(self) -> np.ndarray:
        return roi_error_cov(self.sigma1, self.omega)

    def fitted_cov(self) -> np.ndarray:
        return self.scale * roi_error_cov(self.sigma1, self.omega)


def _rotation_scale(params: AnisoParams) -> np.ndarray:
    c1, s1 = np.cos(params.xi1), np.sin(params.xi1)
    c2, s2 = np.cos(params.xi2), np.sin(params.xi2)
    r1 = np.array([[c1, -s1, 0.0], [s1, c1, 0.0], [0.0, 0.0, 1.0]])
    r2 = np.array([[c2, 0.0, -s2], [0.0, 1.0, 0.0], [s2, 0.0, c2]])
    d = np.diag(1.0 / np.asarray(params.lengths))
    # scale after rotation, so the isocovariance ellipsoid has the stated
    # semi-axes along the rotated frame
    return (d @ r2.T @ r1.T) / params.theta


def aniso_distance(delta: np.ndarray, params: AnisoParams) -> np.ndarray:
    """Elliptical distance ||D R2' R1' delta|| for one or many offsets."""
    A = _rotation_scale(params)
    delta = np.asarray(delta, dtype=float)
    if delta.ndim == 1:
        return float(np.linalg.norm(A @ delta))
    return np.sqrt(((delta @ A.T) ** 2).sum(axis=-1))


def matern_corr(d, nu: float):
    """Matern correlation at distance d (scale 1); exponential at nu = 0.5."""
    d = np.asarray(d, dtype=float)
    out = np.ones_like(d)
    pos = d > 1e-12
    dp = d[pos]
    with np.errstate(invalid="ignore", over="ignore"):
        val = (2.0 ** (1.0 - nu) / special.gamma(nu)) * dp ** nu * special.kv(nu, dp)
    # kv underflows to 0 for large d (the correct limit); the 0 * inf corner
    # at tiny d resolves to the unit correlation limit
    bad = ~np.isfinite(val)
    val[bad] = np.where(dp[bad] < 1.0, 1.0, 0.0)
    out[pos] = val
    if out.ndim == 0:
        return float(out)
    return out


def mixture_weights(voxels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Inverse-distance weights to each subregion centroid, unit row norm."""
    voxels = np.asarray(voxels, dtype=float)
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    d = np.sqrt(((voxels[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2))
    W = np.zeros((voxels.shape[0], centroids.shape[0]))
    zero_rows = (d < 1e-12).any(axis=1)
    with np.errstate(divide="ignore"):
        inv = np.where(d > 0, 1.0 / d, 0.0)
    norm = np.sqrt((inv ** 2).sum(axis=1))
    W[~zero_rows] = inv[~zero_rows] / norm[~zero_rows, None]
    for i in np.nonzero(zero_rows)[0]:
        hits = d[i] < 1e-12
        W[i, hits] = 1.0 / np.sqrt(hits.sum())
    return W


class PairGeometry:
    """Pairwise offset table for one voxel set, shared across many
    covariance evaluations.

    Voxel coordinates sit on an integer grid, so the n^2 coordinate offsets
    collapse to a small set of distinct values; the Matern correlation is
    evaluated once per distinct offset and scattered back. Non-lattice
    coordinates fall back to the dense path.
    """

    def __init__(self, voxels: np.ndarray):
        voxels = np.asarray(voxels, dtype=float)
        self.n = voxels.shape[0]
        deltas = voxels[:, None, :] - voxels[None, :, :]
        flat = deltas.reshape(-1, 3)
        rounded = np.round(flat)
        if np.allclose(flat, rounded, atol=1e-9):
            uniq, inv = np.unique(rounded.astype(np.int64), axis=0,
                                  return_inverse=True)
            self.unique_offsets = uniq.astype(float)
            self.inverse = inv
            self.deltas = None
        else:
            self.unique_offsets = None
            self.inverse = None
            self.deltas = deltas

    def component_corr(self, params: AnisoParams) -> np.ndarray:
        A = _rotation_scale(params)
        if self.unique_offsets is not None:
            d = np.sqrt(((self.unique_offsets @ A.T) ** 2).sum(axis=1))
            c = matern_corr(d, params.nu)
            return c[self.inverse].reshape(self.n, self.n)
        d = np.sqrt(((self.deltas @ A.T) ** 2).sum(axis=2))
        return matern_corr(d, params.nu)


def mixture_cov(voxels: np.ndarray, centroids: np.ndarray,
                params, geometry: PairGeometry | None = None,
                weights: np.ndarray | None = None) -> np.ndarray:
    """Mixture correlation: sum_l w_l(v) w_l(v') Matern_l(dist_l(v - v')).

    ``geometry`` and ``weights`` may be precomputed and reused across calls
    with the same voxels and centroids (the optimizers do this).
    """
    if geometry is None:
        geometry = PairGeometry(voxels)
    if weights is None:
        weights = mixture_weights(voxels, centroids)
    sigma = np.zeros((geometry.n, geometry.n))
    for l, par in enumerate(params):
        sigma += np.outer(weights[:, l], weights[:, l]) * geometry.component_corr(par)
    np.fill_diagonal(sigma, 1.0)
    return sigma


def nonstat_cov(voxels: np.ndarray, partition: SubregionPartition,
                params, geometry: PairGeometry | None = None,
                weights: np.ndarray | None = None) -> np.ndarray:
    """Nonstationary correlation of a region under its subregion partition."""
    return mixture_cov(voxels, partition.centroids, params,
                       geometry=geometry, weights=weights)


def roi_error_cov(sigma1: np.ndarray, omega: float) -> np.ndarray:
    """Within-region error covariance: omega^2 * Sigma1 + (1 - omega)^2 * I."""
    n = sigma1.shape[0]
    return omega ** 2 * sigma1 + (1.0 - omega) ** 2 * np.eye(n)


def _sigmoid(u):
    return 1.0 / (1.0 + np.exp(-u))


def _logit(x):
    x = np.clip(x, 1e-12, 1.0 - 1e-12)
    return np.log(x / (1.0 - x))


def _bounded_log(u, lo, hi):
    return np.exp(np.log(lo) + (np.log(hi) - np.log(lo)) * _sigmoid(u))


def _bounded_log_inv(x, lo, hi):
    frac = (np.log(np.clip(x, lo * (1 + 1e-9), hi * (1 - 1e-9))) - np.log(lo)) \
        / (np.log(hi) - np.log(lo))
    return _logit(frac)


def canonical_angles(xi1: float, xi2: float) -> tuple[float, float]:
    """Reduce rotation angles to [0, pi) without changing the distance.

    The distance is pi-periodic in xi2; adding pi to xi1 is equivalent to
    negating xi2.
    """
    k = int(np.floor(xi1 / np.pi))
    xi1 = xi1 - k * np.pi
    if k % 2 != 0:
        xi2 = -xi2
    xi2 = xi2 - np.floor(xi2 / np.pi) * np.pi
    return float(xi1), float(xi2)


class _RoiObjective:
    """Negative summed replicate log-likelihood over packed parameters."""

    def __init__(self, e_r, voxels, partition, free_angles, length_max,
                 geometry=None):
        self.e = np.asarray(e_r, dtype=float)
        self.voxels = np.asarray(voxels, dtype=float)
        self.partition = partition
        self.free_angles = free_angles
        self.length_max = length_max
        self.geometry = geometry if geometry is not None else PairGeometry(voxels)
        self.weights = mixture_weights(voxels, partition.centroids)
        self.L = partition.n_subregions
        self.block = 6 if free_angles else 4

    def unpack(self, u):
        params = []
        for l in range(self.L):
            seg = u[l * self.block:(l + 1) * self.block]
            nu = float(_bounded_log(seg[0], *NU_BOUNDS))
            lens = tuple(float(_bounded_log(s, LENGTH_FLOOR, self.length_max))
                         for s in seg[1:4])
            if self.free_angles:
                xi1, xi2 = canonical_angles(float(seg[4]), float(seg[5]))
            else:
                xi1, xi2 = 0.0, 0.0
            params.append(AnisoParams(nu=nu, lengths=lens, xi1=xi1, xi2=xi2))
        omega = float(_sigmoid(u[-1]))
        return params, omega

    def pack(self, params, omega):
        u = []
        for par in params:
            u.append(_bounded_log_inv(par.nu, *NU_BOUNDS))
            u.extend(_bounded_log_inv(l, LENGTH_FLOOR, self.length_max)
                     for l in par.lengths)
            if self.free_angles:
                u.extend([par.xi1, par.xi2])
        u.append(_logit(np.clip(omega, 1e-6, 1 - 1e-6)))
        return np.asarray(u)

    def profiled_scale(self, corr):
        chol, _ = _cholesky_with_jitter(corr)
        z = linalg.solve_triangular(chol, self.e, lower=True)
        n, m = self.e.shape
        s2 = float(np.sum(z * z)) / (n * m)
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        loglik = -0.5 * (m * logdet + n * m * (np.log(2.0 * np.pi)
                                               + np.log(s2) + 1.0))
        return s2, loglik

    def __call__(self, u):
        try:
            params, omega = self.unpack(u)
            sigma1 = mixture_cov(self.voxels, self.partition.centroids, params,
                                 geometry=self.geometry, weights=self.weights)
            _, loglik = self.profiled_scale(roi_error_cov(sigma1, omega))
            return -loglik
        except (MrvoxError, linalg.LinAlgError, FloatingPointError):
            return np.inf


def fit_roi_cov(e_r: np.ndarray, voxels: np.ndarray,
                partition: SubregionPartition | None = None,
                free_angles: bool = True,
                config: SimplexConfig | None = None,
                start: RoiCovModel | None = None,
                geometry: PairGeometry | None = None) -> RoiCovModel:
    """Maximum likelihood fit of the mixture covariance and mixing weight.

    Time columns of ``e_r`` are treated as independent replicates; an overall
    variance is profiled out analytically. With ``free_angles`` False the
    rotation angles stay at zero (the setting used during partition
    selection).
    """
    e_r = np.asarray(e_r, dtype=float)
    voxels = np.asarray(voxels, dtype=float)
    n = voxels.shape[0]
    if n < 3 or e_r.shape[0] != n or e_r.shape[1] < 2:
        raise FitError("need >= 3 voxels and >= 2 replicates")
    if partition is None:
        partition = SubregionPartition.from_assignment(voxels, np.zeros(n, dtype=int))

    span = voxels.max(axis=0) - voxels.min(axis=0)
    diameter = float(np.linalg.norm(span)) or 1.0
    obj = _RoiObjective(e_r, voxels, partition, free_angles, 10.0 * diameter,
                        geometry=geometry)

    if start is not None:
        x0 = obj.pack(list(start.params), start.omega)
    else:
        l0 = max(LENGTH_FLOOR * 1.5, min(diameter / 4.0, obj.length_max / 2.0))
        init = [AnisoParams(nu=1.0, lengths=(l0, l0, l0), xi1=0.0, xi2=0.0)
                for _ in range(partition.n_subregions)]
        x0 = obj.pack(init, 0.7)

    u_min, f_min = nelder_mead(obj, x0, config or SimplexConfig())
    if not np.isfinite(f_min):
        raise FitError("covariance likelihood non-finite at optimum")
    params, omega = obj.unpack(u_min)
    sigma1 = mixture_cov(voxels, partition.centroids, params,
                         geometry=obj.geometry, weights=obj.weights)
    scale, _ = obj.profiled_scale(roi_error_cov(sigma1, omega))
    return RoiCovModel(partition=partition, params=tuple(params), omega=omega,
                       sigma1=sigma1, loglik=-f_min, scale=scale)


def krige(cov: np.ndarray, observed_idx: np.ndarray, observed_values: np.ndarray,
          target_idx: np.ndarray) -> np.ndarray:
    """Conditional mean of a zero-mean Gaussian vector at the target indices.

    ``observed_values`` may be a vector or a matrix with one column per
    replicate; predictions have matching shape.
    """
    observed_idx = np.asarray(observed_idx, dtype=int)
    target_idx = np.asarray(target_idx, dtype=int)
    if observed_idx.size == 0:
        raise MrvoxError("kriging requires at least one observed location")
    coo = cov[np.ix_(observed_idx, observed_idx)]
    cto = cov[np.ix_(target_idx, observed_idx)]
    chol, _ = _cholesky_with_jitter(coo)
    z = np.asarray(observed_values, dtype=float)
    sol = linalg.cho_solve((chol, True), z)
    return cto @ sol

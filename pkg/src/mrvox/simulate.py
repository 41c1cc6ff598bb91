"""Phantom generation and the two desk-scale comparison studies.

Phantoms are simulated from the full generative model (per-voxel regression
mean, AR(2) noise driven by a local Matern-mixture field plus a regional
effect). The studies compare four estimators of a region's spatial
covariance (independence, isotropic, anisotropic, locally anisotropic) on a
null activation test and on kriging interpolation; both reuse fixed,
counter-based random streams so reports are reproducible for any worker
count.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import io
from .dataset import BlockDesign, FmriDataset, Parcellation
from .design import bold_regressor, canonical_hrf, design_matrix
from .errors import FitError, MrvoxError
from .localcov import (LENGTH_FLOOR, NU_BOUNDS, AnisoParams, PairGeometry,
                       SubregionPartition, _bounded_log, _sigmoid,
                       canonical_angles, mixture_cov, mixture_weights,
                       roi_error_cov)
from .modelselect import bic_search
from .numerics import SimplexConfig, _cholesky_with_jitter, nelder_mead
from .parallel import (STREAM_PHANTOM, STREAM_STUDY_FP, STREAM_STUDY_KRIGE,
                       pmap, rng_stream)

MODELS = ("glm", "iso", "aniso", "l-aniso")
BURN_IN = 200
Z_5PCT = 1.959963984540054
_PILOT_REP = 10 ** 6  # rep id reserved for the geometry-selection pilot draw


@dataclass(frozen=True)
class RegionTruth:
    """True covariance regime(s) of one region.

    ``split_axis`` slices the region into equal slabs, one per regime; None
    means a single regime anchored at the region centroid.
    """

    regimes: tuple
    omega: float = 0.9
    split_axis: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise MrvoxError("omega must lie in [0, 1]")
        if self.split_axis is None and len(self.regimes) > 1:
            raise MrvoxError("multiple regimes need a split axis")


@dataclass(frozen=True)
class PhantomSpec:
    """Grid geometry, design, and ground truth for a simulated dataset."""

    grid: tuple
    regions: tuple
    # default truth has no task or rest response: the activation basis spans
    # no spatial constant, so a shared nonzero coefficient would sit outside
    # the testable model space
    T: int = 48
    tr_seconds: float = 2.0
    block_len: int = 8
    beta: tuple = (100.0, 2.0, 1.0, 0.5, 0.0, 0.0)
    ar: tuple = (0.3, 0.1, 1.0)
    sigma2_regional: object = "identity"  # or {"chain": rho} or R x R array
    h2_mode: str = "regional"             # or "voxel"
    seed: int = 0

    def __post_init__(self):
        if self.h2_mode not in ("regional", "voxel"):
            raise MrvoxError("h2_mode must be 'regional' or 'voxel'")
        if self.T % 3 != 0:
            raise MrvoxError("T must split into three sessions")

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @classmethod
    def from_json(cls, path) -> "PhantomSpec":
        raw = json.loads(Path(path).read_text())
        regions = tuple(
            RegionTruth(
                regimes=tuple(AnisoParams(nu=r["nu"], lengths=tuple(r["lengths"]),
                                          xi1=r.get("xi1", 0.0), xi2=r.get("xi2", 0.0))
                              for r in reg["regimes"]),
                omega=reg.get("omega", 0.9),
                split_axis=reg.get("split_axis"),
            )
            for reg in raw["regions"])
        return cls(grid=tuple(raw["grid"]), regions=regions,
                   T=raw.get("T", 48), tr_seconds=raw.get("tr_seconds", 2.0),
                   block_len=raw.get("block_len", 8),
                   beta=tuple(raw.get("beta", (100.0, 2.0, 1.0, 0.5, 1.0, 1.0))),
                   ar=tuple(raw.get("ar", (0.3, 0.1, 1.0))),
                   sigma2_regional=raw.get("sigma2_regional", "identity"),
                   h2_mode=raw.get("h2_mode", "regional"),
                   seed=raw.get("seed", 0))


def default_spec(seed: int = 0) -> PhantomSpec:
    """Desk-scale default: 16 x 16 x 8 grid, four regions, mixed regimes."""
    iso = RegionTruth(regimes=(AnisoParams(nu=1.0, lengths=(2.0, 2.0, 2.0)),), omega=0.9)
    aniso = RegionTruth(regimes=(AnisoParams(nu=1.0, lengths=(4.0, 1.5, 1.5)),), omega=0.9)
    two = RegionTruth(
        regimes=(AnisoParams(nu=1.0, lengths=(4.0, 1.2, 1.2)),
                 AnisoParams(nu=1.0, lengths=(1.2, 4.0, 1.2))),
        omega=0.9, split_axis=0)
    return PhantomSpec(grid=(16, 16, 8), regions=(iso, aniso, two, iso), seed=seed)


def _grid_coords(grid) -> np.ndarray:
    nx, ny, nz = grid
    return np.array([(x, y, z) for x in range(nx) for y in range(ny)
                     for z in range(nz)], dtype=int)


def _slab_assignment(coords: np.ndarray, axis: int, n_slabs: int) -> np.ndarray:
    vals = coords[:, axis]
    lo, hi = vals.min(), vals.max()
    width = (hi - lo + 1.0) / n_slabs
    return np.minimum(((vals - lo) // width).astype(int), n_slabs - 1)


def _region_labels(coords: np.ndarray, n_regions: int) -> np.ndarray:
    """Axis-aligned slabs along the longest axis."""
    spans = coords.max(axis=0) - coords.min(axis=0)
    axis = int(np.argmax(spans))
    return _slab_assignment(coords, axis, n_regions) + 1


def make_design(T: int, tr_seconds: float, block_len: int) -> BlockDesign:
    """Three equal sessions, alternating rest/task blocks starting with rest."""
    third = T // 3
    sessions = tuple((k * third + 1, (k + 1) * third) for k in range(3))
    s = np.zeros(T, dtype=int)
    for start, _ in sessions:
        for b0 in range(block_len, third, 2 * block_len):
            s[start - 1 + b0:start - 1 + min(b0 + block_len, third)] = 1
    return BlockDesign(tr_seconds=tr_seconds, n_scans=T, sessions=sessions,
                       task_indicator=s)


def region_truth_cov(spec: PhantomSpec, coords_r: np.ndarray, region: RegionTruth):
    """(Sigma1, error covariance, partition) of one region's truth."""
    if region.split_axis is None:
        assignment = np.zeros(coords_r.shape[0], dtype=int)
    else:
        assignment = _slab_assignment(coords_r, region.split_axis, len(region.regimes))
    partition = SubregionPartition.from_assignment(coords_r, assignment)
    sigma1 = mixture_cov(coords_r, partition.centroids, region.regimes)
    return sigma1, roi_error_cov(sigma1, region.omega), partition


def _regional_corr(spec: PhantomSpec) -> np.ndarray:
    R = spec.n_regions
    s2 = spec.sigma2_regional
    if isinstance(s2, str) and s2 == "identity":
        return np.eye(R)
    if isinstance(s2, dict) and "chain" in s2:
        rho = float(s2["chain"])
        out = np.eye(R)
        for r in range(R - 1):
            out[r, r + 1] = out[r + 1, r] = rho
        return out
    arr = np.asarray(s2, dtype=float)
    if arr.shape != (R, R):
        raise MrvoxError("sigma2_regional must be R x R")
    return arr


def gen_phantom(spec: PhantomSpec, seed: int | None = None):
    """Simulate a dataset from the full model; deterministic given the seed.

    Returns the dataset plus a ground-truth record (per-region covariances,
    AR parameters, the design matrix).
    """
    seed = spec.seed if seed is None else seed
    rng = rng_stream(seed, STREAM_PHANTOM)
    coords = _grid_coords(spec.grid)
    labels = _region_labels(coords, spec.n_regions)
    V = coords.shape[0]
    for r in range(1, spec.n_regions + 1):
        if np.sum(labels == r) < 36:
            raise MrvoxError(f"region {r} smaller than 36 voxels")

    design = make_design(spec.T, spec.tr_seconds, spec.block_len)
    X = design_matrix(design, canonical_hrf(spec.tr_seconds))
    steps = BURN_IN + spec.T

    truth = {"sigma1": {}, "err_cov": {}, "partition": {}, "region": {},
             "ar": spec.ar, "beta": np.asarray(spec.beta, dtype=float), "X": X}
    innov = np.empty((V, steps))
    omega_v = np.empty(V)
    for r, region in enumerate(spec.regions, start=1):
        idx = np.nonzero(labels == r)[0]
        sigma1, err_cov, partition = region_truth_cov(spec, coords[idx], region)
        truth["sigma1"][r] = sigma1
        truth["err_cov"][r] = err_cov
        truth["partition"][r] = partition
        truth["region"][r] = region
        chol, _ = _cholesky_with_jitter(sigma1)
        innov[idx] = region.omega * (chol @ rng.standard_normal((idx.size, steps)))
        omega_v[idx] = region.omega
    sigma2 = _regional_corr(spec)
    truth["sigma2"] = sigma2
    if spec.h2_mode == "regional":
        chol2, _ = _cholesky_with_jitter(sigma2)
        h2 = chol2 @ rng.standard_normal((spec.n_regions, steps))
        innov += (1.0 - omega_v)[:, None] * h2[labels - 1]
    else:
        innov += (1.0 - omega_v)[:, None] * rng.standard_normal((V, steps))

    phi1, phi2, s2 = spec.ar
    sig = np.sqrt(s2)
    eps = np.zeros((V, steps))
    eps[:, 0] = sig * innov[:, 0]
    eps[:, 1] = phi1 * eps[:, 0] + sig * innov[:, 1]
    for t in range(2, steps):
        eps[:, t] = phi1 * eps[:, t - 1] + phi2 * eps[:, t - 2] + sig * innov[:, t]

    series = (X @ truth["beta"])[None, :] + eps[:, BURN_IN:]
    parc = Parcellation(voxel_ids=np.arange(1, V + 1), coords=coords, rois=labels)
    dataset = FmriDataset(parcellation=parc, series=series, design=design)
    return dataset, truth


# ---------------------------------------------------------------------------
# Study machinery

@dataclass
class StudyReport:
    """Per-region rows for each estimator, plus bookkeeping."""

    kind: str
    models: tuple
    roi_labels: list
    values: np.ndarray            # (n_rois, n_models): FP % or RMSE
    reps: int
    failures: np.ndarray
    runtime_seconds: float
    effects: np.ndarray | None = None
    power: np.ndarray | None = None  # (n_rois, n_effects, n_models)

    def mean_row(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def by_model(self) -> dict:
        return {m: float(v) for m, v in zip(self.models, self.mean_row())}

    def write_csv(self, path) -> None:
        if self.kind == "power":
            rows = []
            for ri, roi in enumerate(self.roi_labels):
                for ei, eff in enumerate(self.effects):
                    for mi, m in enumerate(self.models):
                        rows.append((roi, float(eff), m, float(self.power[ri, ei, mi])))
            io.write_report(path, "study_power", ["roi", "effect", "model", "power"], rows)
            return
        header = ["roi"] + list(self.models)
        rows = [(str(roi), *[float(x) for x in self.values[i]])
                for i, roi in enumerate(self.roi_labels)]
        rows.append(("mean", *[float(x) for x in self.mean_row()]))
        io.write_report(path, f"study_{self.kind}", header, rows)


class _TruthSampler:
    """Draws iid-in-time region noise fields from the study truth."""

    def __init__(self, kind, factor):
        self.kind = kind      # "chol": factor @ N(0,1); "empirical": E G / sqrt(T)
        self.factor = factor

    def draw(self, rng, T):
        if self.kind == "chol":
            return self.factor @ rng.standard_normal((self.factor.shape[1], T))
        m = self.factor.shape[1]
        return self.factor @ rng.standard_normal((m, T)) / np.sqrt(m)

    def marginal_sd(self):
        if self.kind == "chol":
            return float(np.sqrt(np.mean(np.sum(self.factor ** 2, axis=1))))
        return float(np.sqrt(np.mean(np.sum(self.factor ** 2, axis=1) / self.factor.shape[1])))


def _prepare_roi(source, roi, subsample_cap, seed, stream):
    """Coordinates, truth sampler, and regressors for one region."""
    if isinstance(source, PhantomSpec):
        coords = _grid_coords(source.grid)
        labels = _region_labels(coords, source.n_regions)
        idx = np.nonzero(labels == roi)[0]
        coords_r = coords[idx]
        design = make_design(source.T, source.tr_seconds, source.block_len)
    else:
        dataset = source
        idx = dataset.parcellation.roi_indices(roi)
        coords_r = dataset.parcellation.coords[idx]
        design = dataset.design
    n = coords_r.shape[0]
    if subsample_cap and n > subsample_cap:
        sub_rng = rng_stream(seed, stream, roi, 2 ** 20)
        keep = np.sort(sub_rng.choice(n, size=subsample_cap, replace=False))
        coords_r = coords_r[keep]
        idx = idx[keep]

    if isinstance(source, PhantomSpec):
        region = source.regions[roi - 1]
        _, err_cov, _ = region_truth_cov(source, coords_r, region)
        chol, _ = _cholesky_with_jitter(err_cov)
        sampler = _TruthSampler("chol", chol)
    else:
        hrf = canonical_hrf(design.tr_seconds)
        X_full = design_matrix(design, hrf)
        Y = source.series[idx]
        beta, _, _, _ = np.linalg.lstsq(X_full, Y.T, rcond=None)
        resid = Y - beta.T @ X_full.T
        sampler = _TruthSampler("empirical", resid)

    hrf = canonical_hrf(design.tr_seconds)
    s1 = np.asarray(design.task_indicator, dtype=float)
    X12 = np.column_stack([bold_regressor(hrf, s1), bold_regressor(hrf, 1.0 - s1)])
    return coords_r, sampler, X12


# study fits decide rejections, not publication-grade parameter values, so
# the simplex budget is kept lean
_STUDY_NM = SimplexConfig(x_tol=3e-3, f_tol=1e-5, max_iter=500, restart_count=0)


def _gp_objective(E, coords, centroids, n_comp, iso, free_angles):
    geometry = PairGeometry(coords)
    weights = mixture_weights(coords, centroids)
    n, m = E.shape
    span = coords.max(axis=0) - coords.min(axis=0)
    diam = float(np.linalg.norm(span)) or 1.0
    lmax = 10.0 * diam
    block = 2 if iso else (6 if free_angles else 4)

    def unpack(u):
        params = []
        for c in range(n_comp):
            seg = u[c * block:(c + 1) * block]
            nu = float(_bounded_log(seg[0], *NU_BOUNDS))
            if iso:
                l = float(_bounded_log(seg[1], LENGTH_FLOOR, lmax))
                params.append(AnisoParams(nu=nu, lengths=(l, l, l)))
            else:
                lens = tuple(float(_bounded_log(s, LENGTH_FLOOR, lmax))
                             for s in seg[1:4])
                if free_angles:
                    xi1, xi2 = canonical_angles(float(seg[4]), float(seg[5]))
                else:
                    xi1, xi2 = 0.0, 0.0
                params.append(AnisoParams(nu=nu, lengths=lens, xi1=xi1, xi2=xi2))
        omega = float(_sigmoid(u[-1]))
        return params, omega

    def negloglik(u):
        try:
            params, omega = unpack(u)
            corr = roi_error_cov(
                mixture_cov(coords, centroids, params, geometry=geometry,
                            weights=weights),
                omega)
            chol, _ = _cholesky_with_jitter(corr)
            z = linalg.solve_triangular(chol, E, lower=True)
            quad = float(np.sum(z * z))
            logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
            sigma2 = quad / (n * m)
            return 0.5 * (m * logdet + n * m * (np.log(2.0 * np.pi)
                                                + np.log(sigma2) + 1.0))
        except (MrvoxError, linalg.LinAlgError, FloatingPointError):
            return np.inf

    return unpack, negloglik, block


def _fit_study_model(name, E, coords, laniso_centroids=None):
    """Fit one study estimator; returns a covariance builder for any coords.

    The overall variance is profiled out analytically, so the simplex only
    searches correlation parameters and the mixing weight.
    """
    n, m = E.shape
    if name == "glm":
        sigma2 = float(np.mean(E * E))
        return {"name": name, "sigma2": sigma2,
                "cov": lambda c: sigma2 * np.eye(c.shape[0])}

    iso = name == "iso"
    if name == "l-aniso":
        centroids = np.asarray(laniso_centroids, dtype=float)
    else:
        centroids = coords.astype(float).mean(axis=0)[None, :]
    n_comp = centroids.shape[0]
    unpack, negloglik, block = _gp_objective(E, coords, centroids, n_comp, iso,
                                             free_angles=not iso)
    x0 = np.zeros(block * n_comp + 1)
    x0[-1] = 1.0  # omega start ~ 0.73
    u_min, f_min = nelder_mead(negloglik, x0, _STUDY_NM)
    if not np.isfinite(f_min):
        raise FitError(f"{name} study fit failed")
    params, omega = unpack(u_min)
    corr_fit = roi_error_cov(mixture_cov(coords, centroids, params), omega)
    chol, _ = _cholesky_with_jitter(corr_fit)
    z = linalg.solve_triangular(chol, E, lower=True)
    sigma2 = float(np.sum(z * z)) / (n * m)

    def cov(c):
        return sigma2 * roi_error_cov(mixture_cov(np.asarray(c, float), centroids, params),
                                      omega)

    return {"name": name, "sigma2": sigma2, "omega": omega, "params": params,
            "centroids": centroids, "cov": cov}


def _wald_reject(Y, X12, cov_total):
    """Wald test of equal task/rest coefficients under a common-mean model."""
    n = Y.shape[0]
    chol, _ = _cholesky_with_jitter(cov_total)
    a = linalg.cho_solve((chol, True), np.ones(n))
    s = float(np.ones(n) @ a)
    u = Y.T @ (a / s)
    XtX = X12.T @ X12
    beta = linalg.solve(XtX, X12.T @ u, assume_a="pos")
    covb = linalg.inv(XtX) / s
    c = np.array([1.0, -1.0])
    z = float(c @ beta) / float(np.sqrt(c @ covb @ c))
    return abs(z) > Z_5PCT


def _select_geometry(coords, sampler, X12, seed, stream, roi):
    """Run the partition search once on a pilot draw to fix the l-aniso
    centroids for a study. Only the partition is kept, so the final
    free-angle refit inside the search runs on the lean budget too."""
    rng = rng_stream(seed, stream, roi, _PILOT_REP)
    E = sampler.draw(rng, X12.shape[0])
    E = E / np.maximum(E.std(axis=1, keepdims=True), 1e-12)
    sel = bic_search(E, coords,
                     seed=int(rng_stream(seed, stream, roi,
                                         _PILOT_REP + 1).integers(2 ** 31)),
                     fit_config=_STUDY_NM, refit_config=_STUDY_NM)
    return sel.partition.centroids


def _common_mean_detrend(Y, X12):
    """Residual field after removing the OLS common mean over the region."""
    beta, _, _, _ = np.linalg.lstsq(X12, Y.mean(axis=0), rcond=None)
    return Y - (X12 @ beta)[None, :], beta


def _study_rep(task):
    """One replicate of a study; returns per-effect, per-model outcomes."""
    (kind, rep, seed, stream, roi, coords, sampler, X12, models,
     centroids, effects, holdout) = task
    rng = rng_stream(seed, stream, roi, rep)
    T = X12.shape[0]
    n = coords.shape[0]
    E = sampler.draw(rng, T)
    out = []
    if kind == "activation":
        for effect in effects:
            Y = E + (effect * X12[:, 0])[None, :]
            row = []
            for name in models:
                try:
                    resid, _ = _common_mean_detrend(Y, X12)
                    fit = _fit_study_model(name, resid, coords, centroids)
                    row.append(_wald_reject(Y, X12, fit["cov"](coords)))
                except (FitError, MrvoxError):
                    row.append(None)
            out.append(row)
        return out
    # kriging: fixed held-out voxels, predictions = fitted mean + kriged residual
    obs = np.setdiff1d(np.arange(n), holdout)
    Y = E
    row = []
    for name in models:
        try:
            resid_obs, beta = _common_mean_detrend(Y[obs], X12)
            fit = _fit_study_model(name, resid_obs, coords[obs], centroids)
            mean_t = (X12 @ beta)[None, :]
            if name == "glm":
                pred = np.broadcast_to(mean_t, (holdout.size, T))
            else:
                cov = fit["cov"](coords)
                coo = cov[np.ix_(obs, obs)]
                cho = cov[np.ix_(holdout, obs)]
                chol, _ = _cholesky_with_jitter(coo)
                pred = mean_t + cho @ linalg.cho_solve((chol, True), resid_obs)
            row.append(float(np.mean((pred - Y[holdout]) ** 2)))
        except (FitError, MrvoxError):
            row.append(None)
    return [row]


def _run_study(kind, source, reps, subsample_cap, seed, models, effects,
               n_removed, threads, stream):
    t0 = time.time()
    if isinstance(source, PhantomSpec):
        roi_labels = list(range(1, source.n_regions + 1))
    else:
        roi_labels = list(range(1, source.parcellation.n_rois + 1))
    effects = np.asarray(effects, dtype=float)
    n_eff = effects.size
    sums = np.zeros((len(roi_labels), n_eff, len(models)))
    counts = np.zeros((len(roi_labels), n_eff, len(models)), dtype=int)
    failures = np.zeros((len(roi_labels), len(models)), dtype=int)

    for ri, roi in enumerate(roi_labels):
        coords, sampler, X12 = _prepare_roi(source, roi, subsample_cap, seed, stream)
        holdout = None
        if kind == "krige":
            hold_rng = rng_stream(seed, stream, roi, 2 ** 21)
            if coords.shape[0] <= n_removed:
                raise MrvoxError(f"region {roi} has too few voxels to hold out {n_removed}")
            holdout = np.sort(hold_rng.choice(coords.shape[0], size=n_removed,
                                              replace=False))
        centroids = None
        if "l-aniso" in models:
            centroids = _select_geometry(coords, sampler, X12, seed, stream, roi)
        tasks = [(("krige" if kind == "krige" else "activation"), rep, seed, stream,
                  roi, coords, sampler, X12, models, centroids, effects, holdout)
                 for rep in range(reps)]
        for res in pmap(_study_rep, tasks, threads):
            for ei, row in enumerate(res):
                for mi, cell in enumerate(row):
                    if cell is None:
                        failures[ri, mi] += 1
                    else:
                        sums[ri, ei, mi] += float(cell)
                        counts[ri, ei, mi] += 1

    safe = np.maximum(counts, 1)
    runtime = time.time() - t0
    if kind == "krige":
        rmse = np.sqrt(sums[:, 0, :] / safe[:, 0, :])
        return StudyReport(kind="krige", models=tuple(models), roi_labels=roi_labels,
                           values=rmse, reps=reps, failures=failures,
                           runtime_seconds=runtime)
    rates = 100.0 * sums / safe
    if kind == "fp":
        return StudyReport(kind="fp", models=tuple(models), roi_labels=roi_labels,
                           values=rates[:, 0, :], reps=reps, failures=failures,
                           runtime_seconds=runtime)
    return StudyReport(kind="power", models=tuple(models), roi_labels=roi_labels,
                       values=rates[:, 0, :], reps=reps, failures=failures,
                       runtime_seconds=runtime, effects=effects,
                       power=rates / 100.0)


def run_fp_study(source, reps: int = 100, subsample_cap: int = 1000, seed: int = 0,
                 models=MODELS, threads: int = 1) -> StudyReport:
    """False-positive percentage of the null activation test per estimator.

    Each replicate simulates a zero-contrast region field from the truth
    covariance, fits every estimator, and tests the task-rest contrast at
    the 5% level.
    """
    return _run_study("fp", source, reps, subsample_cap, seed, tuple(models),
                      [0.0], 0, threads, STREAM_STUDY_FP)


def run_krige_study(source, reps: int = 100, n_removed: int = 50,
                    subsample_cap: int = 1000, seed: int = 0,
                    models=MODELS, threads: int = 1) -> StudyReport:
    """Kriging RMSE at a fixed set of held-out voxels per estimator."""
    return _run_study("krige", source, reps, subsample_cap, seed, tuple(models),
                      [0.0], n_removed, threads, STREAM_STUDY_KRIGE)


def power_curve(source, effect_grid, reps: int = 100, subsample_cap: int = 1000,
                seed: int = 0, models=MODELS, threads: int = 1) -> StudyReport:
    """Rejection rate against the task-rest effect size, per estimator.

    Shares the false-positive study's noise streams, so the zero-effect
    column reproduces ``run_fp_study`` exactly for the same seed.
    """
    return _run_study("power", source, reps, subsample_cap, seed, tuple(models),
                      list(effect_grid), 0, threads, STREAM_STUDY_FP)

"""Staged pipeline: temporal fit, local covariance, regional precision,
activation testing.

Each stage persists its record before the next starts, so any run can be
resumed from the last completed stage. Work units (voxels, regions) are
dispatched to a worker pool and merged in unit order; combined with the
counter-based random streams this makes state files byte-identical for any
worker count.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .activation import ActivationConfig, ActivationFit, bh_fdr, fit_activation, voxel_tests
from .dataset import FmriDataset, load_dataset
from .design import canonical_hrf, design_matrix
from .errors import MrvoxError, StateError
from .regional import CvConfig, RegionalResiduals, cv_lambda, edges, glasso, roi_means, sample_cov
from .modelselect import bic_search
from .parallel import STREAM_LOCAL, STREAM_REGIONAL, default_threads, pmap, rng_stream
from .shrinkage import ShrinkageConfig, select_delta
from .state import (STAGE_ORDER, ActivationStage, FitState, LocalRoiRecord,
                    LocalStage, RegionalStage, TemporalStage, load_state, save_state)
from .temporal import fit_voxel, standardized_residuals

DEFAULT_LAMBDA_GRID = tuple(np.geomspace(1.0, 1e-4, 17))


@dataclass
class PipelineConfig:
    dataset_dir: str
    out_dir: str
    stages: tuple = STAGE_ORDER
    threads: int = field(default_factory=default_threads)
    seed: int = 0
    spline_p: float = 0.3
    fdr_q: float = 0.05
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    n_harmonics: int = 1
    subsample_cap: int = 1000
    resume: bool = False

    def config_hash(self) -> str:
        """Hash of the result-affecting settings (worker count, resume, and
        paths do not change results and are excluded)."""
        parts = (self.seed, self.spline_p, self.fdr_q,
                 tuple(float(l) for l in self.lambda_grid),
                 self.n_harmonics, self.subsample_cap)
        return hashlib.sha256(repr(parts).encode()).hexdigest()[:16]

    def state_dir(self) -> Path:
        return Path(self.out_dir) / "state"

    def reports_dir(self) -> Path:
        return Path(self.out_dir) / "reports"


def _fit_voxel_chunk(args):
    indices, series_chunk, X = args
    fits = []
    for v, y in zip(indices, series_chunk):
        try:
            fits.append(fit_voxel(y, X))
        except MrvoxError as exc:
            raise MrvoxError(f"voxel {v + 1}: {exc}") from exc
    return fits


def _stage_temporal(dataset: FmriDataset, X, config: PipelineConfig) -> TemporalStage:
    V = dataset.n_voxels
    chunks = np.array_split(np.arange(V), max(1, min(config.threads * 4, V)))
    tasks = [(idx, dataset.series[idx], X) for idx in chunks if idx.size]
    results = pmap(_fit_voxel_chunk, tasks, config.threads)
    fits = [fit for chunk in results for fit in chunk]
    beta = np.vstack([f.beta for f in fits])
    ar = np.array([[f.ar.phi1, f.ar.phi2, f.ar.sigma2] for f in fits])
    loglik = np.array([f.loglik for f in fits])
    residuals = standardized_residuals(dataset.series, X, fits)
    return TemporalStage(beta=beta, ar=ar, loglik=loglik, residuals=residuals)


def _fit_roi(args):
    roi, e_r, coords, seed, spline_p = args
    try:
        sel = bic_search(e_r, coords, seed=seed)
        emp = e_r @ e_r.T / e_r.shape[1]
        shrink = select_delta(emp, sel.model.sigma1, coords, ShrinkageConfig(p=spline_p))
    except MrvoxError as exc:
        raise MrvoxError(f"region {roi}: {exc}") from exc
    return LocalRoiRecord(roi=roi, config=sel.config, model=sel.model,
                          shrink=shrink, bic=sel.bic, visited=sel.visited)


def _stage_local(dataset: FmriDataset, temporal: TemporalStage,
                 config: PipelineConfig) -> LocalStage:
    parc = dataset.parcellation
    tasks = []
    for roi in range(1, parc.n_rois + 1):
        idx = parc.roi_indices(roi)
        seed = int(rng_stream(config.seed, STREAM_LOCAL, roi).integers(2 ** 31))
        tasks.append((roi, temporal.residuals[idx], parc.coords[idx], seed,
                      config.spline_p))
    return LocalStage(rois=pmap(_fit_roi, tasks, config.threads))


def _stage_regional(dataset: FmriDataset, temporal: TemporalStage,
                    config: PipelineConfig) -> RegionalStage:
    regional = roi_means(temporal.residuals, dataset.parcellation.rois)
    A = sample_cov(regional.ebar)
    cv_seed = int(rng_stream(config.seed, STREAM_REGIONAL).integers(2 ** 31))
    grid = np.asarray(config.lambda_grid, dtype=float)
    lam_hat, sse = cv_lambda(regional, CvConfig(lambda_grid=grid, seed=cv_seed))
    result = glasso(A, lam_hat)
    return RegionalStage(A=A, result=result, lambda_grid=grid, sse_curve=sse)


def _fit_roi_activation(args):
    roi, series, X, beta_fixed, ars, spatial_cov, coords, act_config = args
    fit = fit_activation(series, X, beta_fixed, ars, spatial_cov, coords, act_config)
    contrast, se, z, p = voxel_tests(fit)
    return roi, fit, contrast, se, z, p


def _stage_activation(dataset: FmriDataset, temporal: TemporalStage,
                      local: LocalStage, X, config: PipelineConfig) -> ActivationStage:
    parc = dataset.parcellation
    act_config = ActivationConfig(n_harmonics=config.n_harmonics, q=config.fdr_q)
    records = {rec.roi: rec for rec in local.rois}
    tasks = []
    for roi in range(1, parc.n_rois + 1):
        idx = parc.roi_indices(roi)
        ars = [temporal.voxel_fit(v).ar for v in idx]
        tasks.append((roi, dataset.series[idx], X, temporal.beta[idx][:, :4],
                      ars, records[roi].activation_cov(), parc.coords[idx],
                      act_config))
    results = pmap(_fit_roi_activation, tasks, config.threads)

    V = dataset.n_voxels
    contrast = np.empty(V)
    se = np.empty(V)
    z = np.empty(V)
    p = np.empty(V)
    rois = {}
    for roi, fit, c_r, se_r, z_r, p_r in results:
        idx = parc.roi_indices(roi)
        contrast[idx], se[idx], z[idx], p[idx] = c_r, se_r, z_r, p_r
        rois[roi] = fit
    reject = bh_fdr(p, act_config.q)
    return ActivationStage(
        fit=ActivationFit(rois=rois, contrast=contrast, se=se, z=z, p=p,
                          reject=reject, q=act_config.q),
        n_harmonics=act_config.n_harmonics)


def write_reports(dataset: FmriDataset, state: FitState, out_dir) -> None:
    """Emit the CSV reports supported by the stages present in the state."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    parc = dataset.parcellation
    if state.activation is not None:
        fit = state.activation.fit
        rows = [(int(parc.voxel_ids[v]), int(parc.rois[v]), float(fit.contrast[v]),
                 float(fit.se[v]), float(fit.z[v]), float(fit.p[v]),
                 int(fit.reject[v]))
                for v in range(parc.n_voxels)]
        io.write_report(out / "activation_report.csv", "activation",
                        ["voxel_id", "roi", "contrast", "se", "z", "p", "reject"], rows)
    if state.regional is not None:
        reg = state.regional
        io.write_report(out / "edges.csv", "edges", ["r", "r2", "weight"],
                        edges(reg.result.W))
        io.write_report(out / "cv_curve.csv", "cv_curve", ["lambda", "sse"],
                        [(float(l), float(s))
                         for l, s in zip(reg.lambda_grid, reg.sse_curve)])
    if state.local is not None:
        rows = []
        for rec in state.local.rois:
            rows.append((rec.roi, rec.model.sigma1.shape[0],
                         rec.config.lx, rec.config.ly, rec.config.lz,
                         rec.model.partition.n_subregions, float(rec.model.omega),
                         float(rec.shrink.delta), float(rec.bic),
                         float(rec.model.loglik)))
        io.write_report(out / "fit_summary.csv", "fit_summary",
                        ["roi", "n_voxels", "lx", "ly", "lz", "n_subregions",
                         "omega", "delta", "bic", "loglik"], rows)


def write_support_snapshots(state: FitState, out_path) -> None:
    """Per-penalty precision supports on the stored covariance, one CSV."""
    if state.regional is None:
        raise StateError("regional stage required for support snapshots")
    rows = []
    for lam in state.regional.lambda_grid:
        result = glasso(state.regional.A, float(lam))
        for r, r2, w in edges(result.W):
            rows.append((float(lam), r, r2, w))
    io.write_report(out_path, "glasso_support", ["lambda", "r", "r2", "weight"], rows)


def run_pipeline(config: PipelineConfig) -> FitState:
    """Execute the requested stages in order, persisting after each one.

    With ``resume`` set, stages already present in the state directory are
    loaded instead of recomputed.
    """
    dataset = load_dataset(config.dataset_dir)
    state_dir = config.state_dir()
    if config.resume and (state_dir / "provenance.txt").exists():
        state = load_state(state_dir)
    else:
        state = FitState()
    state.provenance = {"seed": config.seed, "config_hash": config.config_hash()}

    X = design_matrix(dataset.design, canonical_hrf(dataset.design.tr_seconds))
    requested = [s for s in STAGE_ORDER if s in config.stages]
    for stage in requested:
        if getattr(state, stage) is not None:
            continue
        try:
            if stage == "temporal":
                state.temporal = _stage_temporal(dataset, X, config)
            elif stage == "local":
                if state.temporal is None:
                    raise StateError("stage 'local' requires 'temporal'")
                state.local = _stage_local(dataset, state.temporal, config)
            elif stage == "regional":
                if state.local is None:
                    raise StateError("stage 'regional' requires 'local'")
                state.regional = _stage_regional(dataset, state.temporal, config)
            elif stage == "activation":
                if state.local is None:
                    raise StateError("stage 'activation' requires 'local'")
                state.activation = _stage_activation(dataset, state.temporal,
                                                     state.local, X, config)
        except MrvoxError as exc:
            raise type(exc)(f"stage '{stage}' failed: {exc}") from exc
        save_state(state, state_dir)
    write_reports(dataset, state, config.reports_dir())
    return state

"""Persisted pipeline state.

One subdirectory per completed stage so stages can be re-run or resumed
independently. Matrices round-trip bit-exactly through raw float64 blobs;
scalars go through repr() which round-trips doubles.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .activation import ActivationFit, RoiActivation
from .errors import StateError
from .regional import GlassoResult
from .localcov import AnisoParams, RoiCovModel, SubregionPartition
from .modelselect import GridConfig
from .shrinkage import ShrinkageResult
from .temporal import Ar2Params, VoxelFit

STATE_VERSION = 1
STAGE_ORDER = ("temporal", "local", "regional", "activation")
# prerequisites: 1 -> 2 -> {3, activation}
_REQUIRES = {"temporal": (), "local": ("temporal",),
             "regional": ("temporal", "local"), "activation": ("temporal", "local")}


@dataclass(frozen=True)
class TemporalStage:
    beta: np.ndarray      # V x 6
    ar: np.ndarray        # V x 3 (phi1, phi2, sigma2)
    loglik: np.ndarray    # V
    residuals: np.ndarray  # V x (T - 2)

    def voxel_fit(self, v: int) -> VoxelFit:
        p1, p2, s2 = self.ar[v]
        return VoxelFit(beta=self.beta[v], ar=Ar2Params(p1, p2, s2),
                        loglik=float(self.loglik[v]))


@dataclass(frozen=True)
class LocalRoiRecord:
    roi: int
    config: GridConfig
    model: RoiCovModel
    shrink: ShrinkageResult
    bic: float
    visited: list

    def activation_cov(self) -> np.ndarray:
        """Spatial covariance handed to the activation stage."""
        w = self.model.omega
        n = self.shrink.shrunk.shape[0]
        return w ** 2 * self.shrink.shrunk + (1.0 - w) ** 2 * np.eye(n)


@dataclass(frozen=True)
class LocalStage:
    rois: list  # LocalRoiRecord per region, in label order


@dataclass(frozen=True)
class RegionalStage:
    A: np.ndarray
    result: GlassoResult
    lambda_grid: np.ndarray
    sse_curve: np.ndarray


@dataclass(frozen=True)
class ActivationStage:
    fit: ActivationFit
    n_harmonics: int


@dataclass
class FitState:
    provenance: dict = field(default_factory=dict)
    temporal: TemporalStage | None = None
    local: LocalStage | None = None
    regional: RegionalStage | None = None
    activation: ActivationStage | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        for stage, needs in _REQUIRES.items():
            if getattr(self, stage) is not None:
                for req in needs:
                    if getattr(self, req) is None:
                        raise StateError(f"stage '{stage}' present without '{req}'")

    def stages_present(self) -> list:
        return [s for s in STAGE_ORDER if getattr(self, s) is not None]


def _save_temporal(d: Path, st: TemporalStage):
    io.write_f64(d / "beta.f64", st.beta)
    io.write_f64(d / "ar.f64", st.ar)
    io.write_f64(d / "loglik.f64", st.loglik)
    io.write_f64(d / "residuals.f64", st.residuals)


def _load_temporal(d: Path) -> TemporalStage:
    return TemporalStage(beta=io.read_f64(d / "beta.f64"),
                         ar=io.read_f64(d / "ar.f64"),
                         loglik=io.read_f64(d / "loglik.f64"),
                         residuals=io.read_f64(d / "residuals.f64"))


def _save_local(d: Path, st: LocalStage):
    for rec in st.rois:
        rd = d / f"roi_{rec.roi:03d}"
        rd.mkdir(parents=True, exist_ok=True)
        model = rec.model
        io.write_f64(rd / "assignment.f64", model.partition.assignment.astype(float))
        io.write_f64(rd / "centroids.f64", model.partition.centroids)
        io.write_f64(rd / "aniso.f64", np.array(
            [[p.nu, *p.lengths, p.xi1, p.xi2] for p in model.params]))
        io.write_f64(rd / "sigma1.f64", model.sigma1)
        io.write_f64(rd / "shrunk.f64", rec.shrink.shrunk)
        entries = {
            "roi": rec.roi,
            "lx": rec.config.lx, "ly": rec.config.ly, "lz": rec.config.lz,
            "omega": float(model.omega),
            "scale": float(model.scale),
            "loglik": float(model.loglik),
            "bic": float(rec.bic),
            "delta": float(rec.shrink.delta),
            "n_visited": len(rec.visited),
        }
        for i, (cfg, bic) in enumerate(rec.visited):
            entries[f"visited_{i:04d}"] = f"{cfg.lx},{cfg.ly},{cfg.lz},{float(bic)!r}"
        io.write_kv(rd / "params.txt", entries)
        for axis, curve in rec.shrink.contrast_curves.items():
            if curve is not None:
                io.write_f64(rd / f"contrast_{axis}.f64", np.vstack(
                    [curve["slices"], curve["raw"], curve["smoothed"], curve["at_delta"]]))


def _load_local(d: Path) -> LocalStage:
    recs = []
    for rd in sorted(d.glob("roi_*")):
        kv = io.read_kv(rd / "params.txt")
        assignment = io.read_f64(rd / "assignment.f64").astype(int)
        centroids = io.read_f64(rd / "centroids.f64").reshape(-1, 3)
        partition = SubregionPartition(assignment=assignment, centroids=centroids)
        aniso = io.read_f64(rd / "aniso.f64").reshape(-1, 6)
        params = tuple(AnisoParams(nu=row[0], lengths=(row[1], row[2], row[3]),
                                   xi1=row[4], xi2=row[5]) for row in aniso)
        model = RoiCovModel(partition=partition, params=params,
                            omega=float(kv["omega"]),
                            sigma1=io.read_f64(rd / "sigma1.f64"),
                            loglik=float(kv["loglik"]),
                            scale=float(kv.get("scale", 1.0)))
        curves = {}
        for axis in ("x", "y", "z"):
            path = rd / f"contrast_{axis}.f64"
            if path.exists():
                block = io.read_f64(path)
                curves[axis] = {"slices": block[0], "raw": block[1],
                                "smoothed": block[2], "at_delta": block[3]}
            else:
                curves[axis] = None
        shrink = ShrinkageResult(delta=float(kv["delta"]),
                                 shrunk=io.read_f64(rd / "shrunk.f64"),
                                 contrast_curves=curves)
        visited = []
        for i in range(int(kv["n_visited"])):
            lx, ly, lz, bic = kv[f"visited_{i:04d}"].split(",")
            visited.append((GridConfig(int(lx), int(ly), int(lz)), float(bic)))
        recs.append(LocalRoiRecord(
            roi=int(kv["roi"]),
            config=GridConfig(int(kv["lx"]), int(kv["ly"]), int(kv["lz"])),
            model=model, shrink=shrink, bic=float(kv["bic"]), visited=visited))
    return LocalStage(rois=recs)


def _save_regional(d: Path, st: RegionalStage):
    io.write_f64(d / "A.f64", st.A)
    io.write_f64(d / "W.f64", st.result.W)
    io.write_f64(d / "lambda_grid.f64", st.lambda_grid)
    io.write_f64(d / "sse_curve.f64", st.sse_curve)
    io.write_kv(d / "params.txt", {
        "lambda": float(st.result.lam),
        "nnz_offdiag": st.result.nnz_offdiag,
        "objective": float(st.result.objective),
    })


def _load_regional(d: Path) -> RegionalStage:
    kv = io.read_kv(d / "params.txt")
    result = GlassoResult(W=io.read_f64(d / "W.f64"), lam=float(kv["lambda"]),
                          nnz_offdiag=int(kv["nnz_offdiag"]),
                          objective=float(kv["objective"]))
    return RegionalStage(A=io.read_f64(d / "A.f64"), result=result,
                         lambda_grid=io.read_f64(d / "lambda_grid.f64"),
                         sse_curve=io.read_f64(d / "sse_curve.f64"))


def _save_activation(d: Path, st: ActivationStage):
    fit = st.fit
    io.write_f64(d / "table.f64", np.vstack([fit.contrast, fit.se, fit.z, fit.p]))
    io.write_f64(d / "reject.f64", fit.reject.astype(float))
    io.write_kv(d / "params.txt", {"q": float(fit.q), "n_harmonics": st.n_harmonics,
                                   "rois": ",".join(str(r) for r in sorted(fit.rois))})
    for roi, ra in fit.rois.items():
        rd = d / f"roi_{roi:03d}"
        rd.mkdir(parents=True, exist_ok=True)
        io.write_f64(rd / "theta.f64", ra.theta)
        io.write_f64(rd / "theta_cov.f64", ra.theta_cov)
        io.write_f64(rd / "basis.f64", ra.basis)


def _load_activation(d: Path) -> ActivationStage:
    kv = io.read_kv(d / "params.txt")
    table = io.read_f64(d / "table.f64")
    rois = {}
    for tok in kv["rois"].split(","):
        roi = int(tok)
        rd = d / f"roi_{roi:03d}"
        rois[roi] = RoiActivation(theta=io.read_f64(rd / "theta.f64"),
                                  theta_cov=io.read_f64(rd / "theta_cov.f64"),
                                  basis=io.read_f64(rd / "basis.f64"))
    fit = ActivationFit(rois=rois, contrast=table[0], se=table[1], z=table[2],
                        p=table[3], reject=io.read_f64(d / "reject.f64") > 0.5,
                        q=float(kv["q"]))
    return ActivationStage(fit=fit, n_harmonics=int(kv["n_harmonics"]))


def save_state(state: FitState, path) -> None:
    """Write the state directory; each present stage gets its own subtree."""
    state.validate()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    prov = dict(state.provenance)
    io.write_kv(path / "provenance.txt", {
        "version": STATE_VERSION,
        "seed": prov.get("seed", 0),
        "config_hash": prov.get("config_hash", ""),
        "stages": ",".join(state.stages_present()),
    })
    savers = {"temporal": _save_temporal, "local": _save_local,
              "regional": _save_regional, "activation": _save_activation}
    for stage in STAGE_ORDER:
        record = getattr(state, stage)
        d = path / stage
        if d.exists():
            shutil.rmtree(d)
        if record is not None:
            d.mkdir()
            savers[stage](d, record)


def load_state(path) -> FitState:
    path = Path(path)
    prov_file = path / "provenance.txt"
    if not prov_file.exists():
        raise StateError(f"no state at {path}")
    kv = io.read_kv(prov_file)
    if int(kv.get("version", -1)) != STATE_VERSION:
        raise StateError(f"state version {kv.get('version')} unsupported")
    stages = [s for s in kv.get("stages", "").split(",") if s]
    loaders = {"temporal": _load_temporal, "local": _load_local,
               "regional": _load_regional, "activation": _load_activation}
    records = {}
    for stage in stages:
        d = path / stage
        if stage not in loaders or not d.exists():
            raise StateError(f"state directory missing declared stage '{stage}'")
        try:
            records[stage] = loaders[stage](d)
        except (OSError, KeyError, ValueError) as exc:
            raise StateError(f"corrupt stage '{stage}': {exc}") from exc
    return FitState(provenance={"seed": int(kv.get("seed", 0)),
                                "config_hash": kv.get("config_hash", "")},
                    **records)

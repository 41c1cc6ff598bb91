"""Dataset model: parcellation, block design, and the loaded voxel series."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .design import canonical_hrf, design_matrix
from .errors import DatasetError


@dataclass(frozen=True)
class Parcellation:
    """Voxel ids, integer grid coordinates, and region labels (1..R)."""

    voxel_ids: np.ndarray
    coords: np.ndarray
    rois: np.ndarray

    def __post_init__(self):
        V = self.voxel_ids.size
        if sorted(self.voxel_ids.tolist()) != list(range(1, V + 1)):
            raise DatasetError("voxel ids must be unique and contiguous 1..V")
        if len({tuple(c) for c in self.coords}) != V:
            raise DatasetError("duplicate voxel coordinates")
        R = int(self.rois.max(initial=0))
        present = set(self.rois.tolist())
        if present != set(range(1, R + 1)):
            raise DatasetError("region labels must cover 1..R with none empty")

    @property
    def n_voxels(self) -> int:
        return self.voxel_ids.size

    @property
    def n_rois(self) -> int:
        return int(self.rois.max())

    def roi_indices(self, roi: int) -> np.ndarray:
        return np.nonzero(self.rois == roi)[0]


@dataclass(frozen=True)
class BlockDesign:
    """Scan timing: session intervals partitioning 1..T and the task indicator."""

    tr_seconds: float
    n_scans: int
    sessions: tuple
    task_indicator: np.ndarray

    def __post_init__(self):
        if self.tr_seconds <= 0:
            raise DatasetError("tr_seconds must be positive")
        covered = np.zeros(self.n_scans, dtype=int)
        for start, end in self.sessions:
            if not (1 <= start <= end <= self.n_scans):
                raise DatasetError(f"session [{start}, {end}] outside 1..{self.n_scans}")
            covered[start - 1:end] += 1
        if np.any(covered != 1):
            raise DatasetError("session intervals must partition 1..T")
        s = np.asarray(self.task_indicator)
        if s.size != self.n_scans or not np.isin(s, (0, 1)).all():
            raise DatasetError("task_indicator must be binary of length T")


@dataclass(frozen=True)
class FmriDataset:
    """Parcellation, V x T intensity matrix, and the block design."""

    parcellation: Parcellation
    series: np.ndarray
    design: BlockDesign

    def __post_init__(self):
        V, T = self.series.shape
        if V != self.parcellation.n_voxels or T != self.design.n_scans:
            raise DatasetError("series dimensions disagree with parcellation/design")
        if not np.all(np.isfinite(self.series)):
            raise DatasetError("series contains non-finite values")
        if T < 10:
            raise DatasetError("need at least 10 scans")
        # raises RankDeficientDesignError when the induced design is singular
        design_matrix(self.design, canonical_hrf(self.design.tr_seconds))

    @property
    def n_voxels(self) -> int:
        return self.series.shape[0]

    @property
    def n_scans(self) -> int:
        return self.series.shape[1]


def _indicator_from_blocks(T: int, blocks) -> np.ndarray:
    s = np.zeros(T, dtype=int)
    for start, end in blocks:
        if not (1 <= start <= end <= T):
            raise DatasetError(f"task block [{start}, {end}] outside 1..{T}")
        s[start - 1:end] = 1
    return s


def load_dataset(root) -> FmriDataset:
    """Read parcellation.csv, series.f64, and meta.json from a directory."""
    root = Path(root)
    for name in ("parcellation.csv", "series.f64", "meta.json"):
        if not (root / name).exists():
            raise DatasetError(f"missing {name} in {root}")
    meta = io.read_meta(root / "meta.json")
    ids, coords, rois = io.read_parcellation(root / "parcellation.csv")
    V, T = int(meta["V"]), int(meta["T"])
    if ids.size != V:
        raise DatasetError(f"parcellation has {ids.size} voxels, meta declares {V}")
    series = io.read_raw_f64(root / "series.f64", (V, T))
    design = BlockDesign(
        tr_seconds=float(meta["tr_seconds"]),
        n_scans=T,
        sessions=tuple((int(a), int(b)) for a, b in meta["sessions"]),
        task_indicator=_indicator_from_blocks(T, meta["task_blocks"]),
    )
    return FmriDataset(parcellation=Parcellation(voxel_ids=ids, coords=coords, rois=rois),
                       series=series, design=design)


def _blocks_from_indicator(s: np.ndarray):
    blocks = []
    start = None
    for t, v in enumerate(s, start=1):
        if v and start is None:
            start = t
        elif not v and start is not None:
            blocks.append((start, t - 1))
            start = None
    if start is not None:
        blocks.append((start, len(s)))
    return blocks


def write_dataset(root, dataset: FmriDataset) -> None:
    """Emit the three dataset files for a (usually simulated) dataset."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    p = dataset.parcellation
    io.write_parcellation(root / "parcellation.csv", p.voxel_ids, p.coords, p.rois)
    io.write_raw_f64(root / "series.f64", dataset.series)
    io.write_meta(root / "meta.json", dataset.n_voxels, dataset.n_scans,
                  dataset.design.tr_seconds, dataset.design.sessions,
                  _blocks_from_indicator(dataset.design.task_indicator))

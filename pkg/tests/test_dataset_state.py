import numpy as np
import pytest

from mrvox import io
from mrvox.dataset import (BlockDesign, FmriDataset, Parcellation, load_dataset,
                           write_dataset)
from mrvox.errors import DatasetError, StateError
from mrvox.simulate import PhantomSpec, RegionTruth, default_spec, gen_phantom
from mrvox.localcov import AnisoParams
from mrvox.state import FitState, TemporalStage, load_state, save_state


def tiny_spec(seed=0):
    reg = RegionTruth(regimes=(AnisoParams(nu=1.0, lengths=(2.0, 2.0, 2.0)),),
                      omega=0.8)
    return PhantomSpec(grid=(4, 4, 3), regions=(reg,), T=12, block_len=2, seed=seed)


class TestParcellation:
    def test_contiguity_enforced(self):
        with pytest.raises(DatasetError):
            Parcellation(voxel_ids=np.array([1, 3]),
                         coords=np.array([[0, 0, 0], [1, 0, 0]]),
                         rois=np.array([1, 1]))

    def test_duplicate_coords_rejected(self):
        with pytest.raises(DatasetError):
            Parcellation(voxel_ids=np.array([1, 2]),
                         coords=np.array([[0, 0, 0], [0, 0, 0]]),
                         rois=np.array([1, 1]))

    def test_roi_labels_must_cover(self):
        with pytest.raises(DatasetError):
            Parcellation(voxel_ids=np.array([1, 2]),
                         coords=np.array([[0, 0, 0], [1, 0, 0]]),
                         rois=np.array([1, 3]))


class TestBlockDesign:
    def test_sessions_must_partition(self):
        with pytest.raises(DatasetError):
            BlockDesign(tr_seconds=2.0, n_scans=10, sessions=((1, 5), (5, 10)),
                        task_indicator=np.zeros(10, dtype=int))
        with pytest.raises(DatasetError):
            BlockDesign(tr_seconds=2.0, n_scans=10, sessions=((1, 4), (6, 10)),
                        task_indicator=np.zeros(10, dtype=int))

    def test_binary_indicator(self):
        with pytest.raises(DatasetError):
            BlockDesign(tr_seconds=2.0, n_scans=4, sessions=((1, 4),),
                        task_indicator=np.array([0, 1, 2, 0]))


class TestLoadDataset:
    def test_round_trip_phantom(self, tmp_path):
        dataset, _ = gen_phantom(tiny_spec())
        write_dataset(tmp_path, dataset)
        loaded = load_dataset(tmp_path)
        assert loaded.n_voxels == 48 and loaded.n_scans == 12
        assert np.array_equal(loaded.series, dataset.series)
        assert loaded.design.sessions == dataset.design.sessions
        assert np.array_equal(loaded.design.task_indicator,
                              dataset.design.task_indicator)

    def test_series_wrong_length_rejected(self, tmp_path):
        dataset, _ = gen_phantom(tiny_spec())
        write_dataset(tmp_path, dataset)
        blob = (tmp_path / "series.f64").read_bytes()
        (tmp_path / "series.f64").write_bytes(blob[:-8])
        with pytest.raises(DatasetError, match="bytes"):
            load_dataset(tmp_path)

    def test_missing_file_rejected(self, tmp_path):
        dataset, _ = gen_phantom(tiny_spec())
        write_dataset(tmp_path, dataset)
        (tmp_path / "meta.json").unlink()
        with pytest.raises(DatasetError, match="missing"):
            load_dataset(tmp_path)

    def test_nonfinite_rejected(self, tmp_path):
        dataset, _ = gen_phantom(tiny_spec())
        write_dataset(tmp_path, dataset)
        series = dataset.series.copy()
        series[0, 0] = np.nan
        io.write_raw_f64(tmp_path / "series.f64", series)
        with pytest.raises(DatasetError, match="finite"):
            load_dataset(tmp_path)

    def test_overlapping_sessions_rejected(self, tmp_path):
        dataset, _ = gen_phantom(tiny_spec())
        write_dataset(tmp_path, dataset)
        meta = (tmp_path / "meta.json").read_text()
        meta = meta.replace('[\n      5,\n      8\n    ]', '[\n      4,\n      8\n    ]')
        (tmp_path / "meta.json").write_text(meta)
        with pytest.raises(DatasetError):
            load_dataset(tmp_path)

    def test_paper_scale_design_accepted(self, tmp_path):
        spec = PhantomSpec(grid=(6, 4, 2), regions=tiny_spec().regions, T=144,
                           block_len=8, seed=1)
        dataset, _ = gen_phantom(spec)
        write_dataset(tmp_path, dataset)
        loaded = load_dataset(tmp_path)
        assert loaded.design.sessions == ((1, 48), (49, 96), (97, 144))

    def test_voxel_relabeling_permutes_outputs(self, tmp_path, design_144):
        from mrvox.temporal import fit_voxel
        spec = PhantomSpec(grid=(4, 4, 3), regions=tiny_spec().regions, T=48,
                           block_len=8, seed=3)
        dataset, truth = gen_phantom(spec)
        X = truth["X"]
        perm = np.random.default_rng(0).permutation(dataset.n_voxels)
        fits = [fit_voxel(y, X) for y in dataset.series]
        fits_p = [fit_voxel(y, X) for y in dataset.series[perm]]
        for i, j in enumerate(perm):
            assert fits_p[i].ar == fits[j].ar
            assert np.array_equal(fits_p[i].beta, fits[j].beta)


class TestFitState:
    def _temporal(self, V=4, T=12):
        rng = np.random.default_rng(0)
        return TemporalStage(beta=rng.standard_normal((V, 6)),
                             ar=np.tile([0.3, 0.1, 1.0], (V, 1)),
                             loglik=rng.standard_normal(V),
                             residuals=rng.standard_normal((V, T - 2)))

    def test_empty_round_trip(self, tmp_path):
        state = FitState(provenance={"seed": 7, "config_hash": "abc"})
        save_state(state, tmp_path / "s")
        loaded = load_state(tmp_path / "s")
        assert loaded.stages_present() == []
        assert loaded.provenance["seed"] == 7

    def test_stage_order_invariant(self):
        from mrvox.state import LocalStage
        with pytest.raises(StateError):
            FitState(local=LocalStage(rois=[]))

    def test_temporal_round_trip_bitwise(self, tmp_path):
        st = self._temporal()
        state = FitState(provenance={"seed": 1}, temporal=st)
        save_state(state, tmp_path / "s")
        loaded = load_state(tmp_path / "s")
        for field in ("beta", "ar", "loglik", "residuals"):
            a = getattr(st, field)
            b = getattr(loaded.temporal, field)
            assert a.tobytes() == b.tobytes()

    def test_version_mismatch_rejected(self, tmp_path):
        state = FitState(provenance={"seed": 1}, temporal=self._temporal())
        save_state(state, tmp_path / "s")
        prov = (tmp_path / "s" / "provenance.txt").read_text()
        (tmp_path / "s" / "provenance.txt").write_text(
            prov.replace("version=1", "version=99"))
        with pytest.raises(StateError, match="version"):
            load_state(tmp_path / "s")

    def test_corrupt_stage_rejected(self, tmp_path):
        state = FitState(provenance={"seed": 1}, temporal=self._temporal())
        save_state(state, tmp_path / "s")
        (tmp_path / "s" / "temporal" / "beta.f64.shape").unlink()
        with pytest.raises(StateError):
            load_state(tmp_path / "s")


class TestReportFormat:
    def test_schema_header_and_lf(self, tmp_path):
        path = tmp_path / "r.csv"
        io.write_report(path, "demo", ["a", "b"], [(1, 2.5), (3, -1.0)])
        raw = path.read_bytes()
        assert raw.startswith(b"# schema=demo version=1\na,b\n")
        assert b"\r" not in raw

    def test_parcellation_header_exact(self, tmp_path):
        dataset, _ = gen_phantom(tiny_spec())
        write_dataset(tmp_path, dataset)
        first = (tmp_path / "parcellation.csv").read_text().split("\n", 1)[0]
        assert first == "voxel_id,x,y,z,roi"

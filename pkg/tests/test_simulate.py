import numpy as np
import pytest

from mrvox.errors import MrvoxError
from mrvox.localcov import AnisoParams
from mrvox.simulate import (PhantomSpec, RegionTruth, default_spec, gen_phantom,
                            make_design, power_curve, region_truth_cov,
                            run_fp_study, run_krige_study)


def iso_region(omega=0.8, l=2.0):
    return RegionTruth(regimes=(AnisoParams(nu=1.0, lengths=(l, l, l)),), omega=omega)


class TestSpecValidation:
    def test_multi_regime_needs_axis(self):
        with pytest.raises(MrvoxError):
            RegionTruth(regimes=(AnisoParams(nu=1, lengths=(1, 1, 1)),
                                 AnisoParams(nu=1, lengths=(2, 2, 2))),
                        split_axis=None)

    def test_t_must_split_in_sessions(self):
        with pytest.raises(MrvoxError):
            PhantomSpec(grid=(4, 4, 3), regions=(iso_region(),), T=50)

    def test_small_region_rejected(self):
        spec = PhantomSpec(grid=(3, 3, 3), regions=(iso_region(),), T=12, block_len=2)
        with pytest.raises(MrvoxError):
            gen_phantom(spec)

    def test_json_round_trip(self, tmp_path):
        import json
        payload = {
            "grid": [6, 4, 4], "T": 48, "seed": 5,
            "regions": [{"omega": 0.9, "split_axis": 0,
                         "regimes": [{"nu": 1.0, "lengths": [4.0, 1.0, 1.0]},
                                     {"nu": 1.0, "lengths": [1.0, 4.0, 1.0]}]}],
        }
        p = tmp_path / "spec.json"
        p.write_text(json.dumps(payload))
        spec = PhantomSpec.from_json(p)
        assert spec.grid == (6, 4, 4)
        assert spec.regions[0].split_axis == 0
        assert len(spec.regions[0].regimes) == 2


class TestGenPhantom:
    def test_iid_unit_variance(self):
        # beta = 0, omega = 0, AR = 0, voxel-level regional term: pure iid noise
        spec = PhantomSpec(grid=(16, 16, 8), regions=(iso_region(omega=0.0),),
                           T=51, block_len=4, beta=(0.0,) * 6,
                           ar=(0.0, 0.0, 1.0), h2_mode="voxel", seed=9)
        dataset, _ = gen_phantom(spec)
        assert dataset.series.size >= 1e5
        v = float(dataset.series.var())
        assert 0.9 <= v <= 1.1
        assert abs(float(dataset.series.mean())) < 0.02

    def test_spatial_correlation_matches_sigma1(self):
        # omega = 1, AR = 0: columns are iid draws from Sigma1
        spec = PhantomSpec(grid=(4, 4, 3), regions=(iso_region(omega=1.0, l=2.0),),
                           T=999, block_len=8, beta=(0.0,) * 6,
                           ar=(0.0, 0.0, 1.0), seed=3)
        dataset, truth = gen_phantom(spec)
        S = truth["sigma1"][1]
        emp = np.corrcoef(dataset.series)
        err = np.abs(emp - S)
        assert float(np.percentile(err, 95)) < 0.05
        assert float(err.mean()) < 0.02

    def test_deterministic_bytes(self):
        spec = default_spec(seed=4)
        d1, _ = gen_phantom(spec)
        d2, _ = gen_phantom(spec)
        assert d1.series.tobytes() == d2.series.tobytes()

    def test_regional_effect_correlates_roi_means(self):
        # strong regional share with a chain Sigma2 couples neighboring regions
        regions = tuple(iso_region(omega=0.2) for _ in range(3))
        spec = PhantomSpec(grid=(9, 4, 3), regions=regions, T=300, block_len=8,
                           beta=(0.0,) * 6, ar=(0.0, 0.0, 1.0),
                           sigma2_regional={"chain": 0.6}, seed=11)
        dataset, truth = gen_phantom(spec)
        means = np.vstack([dataset.series[dataset.parcellation.rois == r].mean(axis=0)
                           for r in (1, 2, 3)])
        c = np.corrcoef(means)
        assert c[0, 1] > 0.3 and c[1, 2] > 0.3
        assert c[0, 1] > c[0, 2] - 0.1  # chain decays with separation

    def test_mean_structure_applied(self):
        spec = PhantomSpec(grid=(4, 4, 3), regions=(iso_region(),), T=48,
                           beta=(100.0, 2.0, 1.0, 0.5, 1.0, 1.0),
                           ar=(0.2, 0.1, 0.04), seed=6)
        dataset, truth = gen_phantom(spec)
        expected = truth["X"] @ truth["beta"]
        assert np.max(np.abs(dataset.series.mean(axis=0) - expected)) < 1.0


TWO_REGIME = RegionTruth(
    regimes=(AnisoParams(nu=1.0, lengths=(5.0, 1.2, 1.2)),
             AnisoParams(nu=1.0, lengths=(1.2, 5.0, 1.2))),
    omega=0.95, split_axis=0)


class TestStudies:
    def test_fp_study_determinism_across_threads(self):
        spec = PhantomSpec(grid=(4, 4, 3), regions=(iso_region(omega=0.9),),
                           T=48, seed=2)
        r1 = run_fp_study(spec, reps=4, seed=5, models=("glm", "iso"), threads=1)
        r2 = run_fp_study(spec, reps=4, seed=5, models=("glm", "iso"), threads=2)
        assert np.array_equal(r1.values, r2.values)
        assert np.array_equal(r1.failures, r2.failures)

    def test_power_zero_effect_equals_fp(self):
        spec = PhantomSpec(grid=(4, 4, 3), regions=(iso_region(omega=0.9),),
                           T=48, seed=2)
        fp = run_fp_study(spec, reps=4, seed=7, models=("glm", "iso"), threads=1)
        pw = power_curve(spec, [0.0, 5.0], reps=4, seed=7,
                         models=("glm", "iso"), threads=1)
        assert np.allclose(100.0 * pw.power[:, 0, :], fp.values)

    def test_power_saturates_at_large_effect(self):
        spec = PhantomSpec(grid=(4, 4, 3), regions=(iso_region(omega=0.5),),
                           T=48, seed=2)
        pw = power_curve(spec, [0.0, 50.0], reps=4, seed=3, models=("glm",),
                         threads=1)
        assert np.all(pw.power[:, 1, :] == 1.0)

    def test_krige_study_report_shape_and_determinism(self):
        spec = PhantomSpec(grid=(6, 4, 3), regions=(TWO_REGIME,), T=48, seed=2)
        r1 = run_krige_study(spec, reps=3, n_removed=20, seed=1,
                             models=("glm", "iso"), threads=1)
        r2 = run_krige_study(spec, reps=3, n_removed=20, seed=1,
                             models=("glm", "iso"), threads=2)
        assert r1.values.shape == (1, 2)
        assert np.array_equal(r1.values, r2.values)
        assert np.all(r1.values >= 0)

    def test_krige_needs_enough_voxels(self):
        spec = PhantomSpec(grid=(4, 4, 3), regions=(iso_region(),), T=12,
                           block_len=2, seed=2)
        with pytest.raises(MrvoxError):
            run_krige_study(spec, reps=1, n_removed=48, seed=1, models=("glm",))

    def test_empirical_source_runs(self):
        spec = PhantomSpec(grid=(4, 4, 3), regions=(iso_region(omega=0.9),),
                           T=48, seed=8)
        dataset, _ = gen_phantom(spec)
        rep = run_fp_study(dataset, reps=3, seed=4, models=("glm",), threads=1)
        assert rep.values.shape == (1, 1)

    def test_subsample_cap_applies(self):
        spec = PhantomSpec(grid=(6, 4, 3), regions=(iso_region(omega=0.9),),
                           T=48, seed=8)
        rep = run_fp_study(spec, reps=2, subsample_cap=40, seed=4,
                           models=("glm",), threads=1)
        assert rep.values.shape == (1, 1)

    def test_report_csv_layout(self, tmp_path):
        spec = PhantomSpec(grid=(4, 4, 3), regions=(iso_region(omega=0.9),),
                           T=48, seed=2)
        rep = run_fp_study(spec, reps=2, seed=5, models=("glm", "iso"), threads=1)
        path = tmp_path / "study_fp.csv"
        rep.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema=study_fp version=1"
        assert lines[1] == "roi,glm,iso"
        assert lines[-1].startswith("mean,")


class TestRegionTruthCov:
    def test_two_regime_partition(self):
        spec = PhantomSpec(grid=(8, 4, 4), regions=(TWO_REGIME,), T=48, seed=0)
        coords = np.array([(x, y, z) for x in range(8) for y in range(4)
                           for z in range(4)])
        sigma1, err, part = region_truth_cov(spec, coords, TWO_REGIME)
        assert part.n_subregions == 2
        assert np.allclose(np.diag(sigma1), 1.0)
        assert np.linalg.eigvalsh(err).min() >= -1e-10

    def test_make_design_blocks(self):
        bd = make_design(48, 2.0, 8)
        s = bd.task_indicator
        assert s[:8].sum() == 0 and s[8:16].sum() == 8  # rest first

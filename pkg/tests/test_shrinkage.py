import numpy as np
import pytest

from mrvox.errors import MrvoxError
from mrvox.numerics import smoothing_spline
from mrvox.shrinkage import (ShrinkageConfig, directional_contrasts, select_delta)

from conftest import grid_coords


def chain_coords(n):
    return np.column_stack([np.arange(n), np.zeros(n, int), np.zeros(n, int)])


class TestDirectionalContrasts:
    def test_constant_matrix_zero_contrast(self):
        coords = grid_coords(4, 3, 2)
        cov = np.full((len(coords), len(coords)), 0.7)
        cx, cy, cz = directional_contrasts(cov, coords)
        for c in (cx, cy, cz):
            assert np.allclose(c.values, 0.0)

    def test_identity_gives_two(self):
        coords = grid_coords(4, 3, 2)
        cx, cy, cz = directional_contrasts(np.eye(len(coords)), coords)
        for c in (cx, cy, cz):
            assert np.allclose(c.values, 2.0)

    def test_two_voxel_pair_formula(self):
        coords = chain_coords(2)
        rho = 0.3
        cov = np.array([[1.0, rho], [rho, 1.0]])
        cx, cy, cz = directional_contrasts(cov, coords)
        assert np.allclose(cx.values, [2 * (1 - rho)])
        assert cy.slices.size == 0 and cz.slices.size == 0

    def test_linearity_exact(self):
        rng = np.random.default_rng(0)
        coords = grid_coords(5, 4, 2)
        n = len(coords)
        A = rng.standard_normal((n, n)); A = A + A.T
        B = rng.standard_normal((n, n)); B = B + B.T
        d = 0.37
        mixed = directional_contrasts((1 - d) * A + d * B, coords)
        ca = directional_contrasts(A, coords)
        cb = directional_contrasts(B, coords)
        for m, a, b in zip(mixed, ca, cb):
            assert np.allclose(m.values, (1 - d) * a.values + d * b.values, atol=1e-12)

    def test_slice_indexing(self):
        coords = grid_coords(6, 1, 1)
        cx, cy, cz = directional_contrasts(np.eye(6), coords)
        assert np.array_equal(cx.slices, np.arange(5.0))


class TestSelectDelta:
    def _random_psd_pair(self, n, rng):
        M = rng.standard_normal((n, 2 * n))
        emp = M @ M.T / (2 * n)
        N = rng.standard_normal((n, 2 * n))
        mle = N @ N.T / (2 * n)
        return emp, mle

    def test_identical_operands_delta_zero(self):
        rng = np.random.default_rng(1)
        coords = grid_coords(5, 3, 2)
        emp, _ = self._random_psd_pair(len(coords), rng)
        res = select_delta(emp, emp.copy(), coords)
        assert res.delta == 0.0
        assert np.allclose(res.shrunk, emp)

    def test_p_one_keeps_empirical(self):
        # with p = 1 the smoothed target equals the raw empirical contrasts,
        # so delta = 0 is optimal
        rng = np.random.default_rng(2)
        coords = grid_coords(5, 4, 2)
        emp, mle = self._random_psd_pair(len(coords), rng)
        res = select_delta(emp, mle, coords, ShrinkageConfig(p=1.0))
        assert res.delta <= 1e-3

    def test_constructed_mixture_recovers_delta(self):
        # build an "mle" whose contrasts place the smoothed empirical curve
        # exactly at the 0.4 mixture, making 0.4 the analytic minimizer
        rng = np.random.default_rng(3)
        n = 12
        coords = chain_coords(n)
        M = rng.standard_normal((n, 3 * n))
        emp = M @ M.T / (3 * n)
        cx_emp = directional_contrasts(emp, coords)[0]
        smooth = smoothing_spline(cx_emp.slices, cx_emp.values, 0.3)
        target = (smooth - 0.6 * cx_emp.values) / 0.4
        mle = emp.copy()
        for x in range(n - 1):
            adjust = (target[x] - cx_emp.values[x]) / -2.0
            mle[x, x + 1] += adjust
            mle[x + 1, x] += adjust
        res = select_delta(emp, mle, coords, ShrinkageConfig(p=0.3))
        assert abs(res.delta - 0.4) <= 2e-3

    def test_delta_bounds_and_endpoint_dominance(self):
        rng = np.random.default_rng(4)
        coords = grid_coords(4, 4, 3)
        for _ in range(5):
            emp, mle = self._random_psd_pair(len(coords), rng)
            res = select_delta(emp, mle, coords)
            assert 0.0 <= res.delta <= 1.0
            curves = res.contrast_curves

            def objective(d):
                tot = 0.0
                for axis in ("x", "y", "z"):
                    c = curves[axis]
                    if c is None:
                        continue
                    emp_c = c["raw"]
                    mle_c = directional_contrasts(mle, coords)[
                        "xyz".index(axis)].values
                    tot += float(np.sum((c["smoothed"]
                                         - ((1 - d) * emp_c + d * mle_c)) ** 2))
                return tot

            assert objective(res.delta) <= objective(0.0) + 1e-9
            assert objective(res.delta) <= objective(1.0) + 1e-9

    def test_shrunk_psd_for_psd_operands(self):
        rng = np.random.default_rng(5)
        coords = grid_coords(4, 3, 3)
        for _ in range(5):
            emp, mle = self._random_psd_pair(len(coords), rng)
            res = select_delta(emp, mle, coords)
            assert np.linalg.eigvalsh(res.shrunk).min() >= -1e-8
            assert np.allclose(res.shrunk,
                               (1 - res.delta) * emp + res.delta * mle)

    def test_degenerate_geometry_raises(self):
        coords = np.array([[0, 0, 0], [5, 5, 5]])
        with pytest.raises(MrvoxError):
            select_delta(np.eye(2), np.eye(2), coords)

    def test_short_curves_use_raw_fallback(self):
        # 3 slices per axis: too short to smooth, raw curve becomes the target
        coords = grid_coords(3, 3, 3)
        rng = np.random.default_rng(6)
        emp, mle = self._random_psd_pair(len(coords), rng)
        res = select_delta(emp, mle, coords)
        assert res.delta <= 1e-3  # raw target is matched exactly at delta = 0

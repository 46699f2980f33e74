import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rectgpr import normalize_features, synth_function
from rectgpr.data import rmse
from rectgpr.gpr import (
    fit_rect,
    fit_square,
    predict_mean,
    predict_rect,
    predict_variance,
    rect_variance,
    residual_rmse,
    select_basis_centers,
)
from rectgpr.kernel import KernelFamily, KernelSpec, cross_covariance, kernel_eval

FAR = 1e3


class TestSquare:
    def test_single_point(self):
        m = fit_square([[0.3, 0.4]], [5.0], KernelSpec(), 0.0)
        np.testing.assert_allclose(m.coefficients, [5.0])

    def test_interpolates_without_jitter(self):
        d = normalize_features(synth_function("additive_sine", 3, 200, 4))
        m = fit_square(d.points, d.targets, KernelSpec(l=0.0), 0.0)
        err = np.max(np.abs(predict_mean(m, d.points) - d.targets))
        assert err <= 1e-8 * d.targets.std()

    def test_jitter_smooths(self):
        d = normalize_features(synth_function("gaussian_wells", 3, 50, 1))
        m = fit_square(d.points, d.targets, KernelSpec(l=2.0), 1e-4)
        r = rmse(predict_mean(m, d.points), d.targets)
        assert 0.0 < r < d.targets.std()

    def test_coefficients_solve_system(self, wells3d):
        m = fit_square(wells3d.points, wells3d.targets, KernelSpec(l=-0.5), 1e-6)
        K = cross_covariance(m.spec, m.train_points, m.train_points) + 1e-6 * np.eye(wells3d.n)
        assert np.max(np.abs(K @ m.coefficients - m.train_targets)) <= 1e-6 * np.max(np.abs(m.train_targets))

    def test_query_at_training_point(self, wells3d):
        m = fit_square(wells3d.points, wells3d.targets, KernelSpec(l=0.0), 0.0)
        assert predict_mean(m, wells3d.points[7])[0] == pytest.approx(wells3d.targets[7], abs=1e-10)

    def test_far_query_reverts_to_zero(self, wells3d):
        m = fit_square(wells3d.points, wells3d.targets, KernelSpec(l=0.0), 0.0)
        assert predict_mean(m, [[FAR, FAR, FAR]])[0] == 0.0

    def test_two_point_closed_form(self):
        spec = KernelSpec(l=-0.3)
        x = np.array([[0.0, 0.0], [0.6, 0.2]])
        f = np.array([1.5, -0.7])
        mid = x.mean(axis=0)
        k12 = kernel_eval(spec, x[0], x[1])
        ka, kb = kernel_eval(spec, mid, x[0]), kernel_eval(spec, mid, x[1])
        det = 1.0 - k12 * k12
        c = np.array([f[0] - k12 * f[1], f[1] - k12 * f[0]]) / det
        expected = ka * c[0] + kb * c[1]
        m = fit_square(x, f, spec, 0.0)
        assert predict_mean(m, [mid])[0] == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self, wells3d):
        m = fit_square(wells3d.points[:5], wells3d.targets[:5], KernelSpec(), 0.0)
        with pytest.raises(ValueError, match="dimension"):
            predict_mean(m, [[0.0, 0.0]])
        with pytest.raises(ValueError, match="dimension"):
            predict_variance(m, [[0.0, 0.0]])

    def test_center_targets(self, wells3d):
        m = fit_square(wells3d.points, wells3d.targets, KernelSpec(l=0.0), 0.0, center_targets=True)
        assert m.target_mean == pytest.approx(wells3d.targets.mean())
        assert predict_mean(m, [[FAR] * 3])[0] == pytest.approx(m.target_mean)
        np.testing.assert_allclose(predict_mean(m, wells3d.points), wells3d.targets, atol=1e-9)


class TestSquareVariance:
    def test_zero_at_training_points(self, wells3d):
        m = fit_square(wells3d.points, wells3d.targets, KernelSpec(l=-0.5), 0.0)
        assert np.all(predict_variance(m, wells3d.points[:20]) <= 1e-8 * m.target_variance)

    def test_prior_far_away(self, wells3d):
        spec = KernelSpec(l=0.0, sigma2=1.0)
        m = fit_square(wells3d.points, wells3d.targets, spec, 0.0)
        v = predict_variance(m, [[FAR, 0.0, 0.0]])[0]
        assert v == pytest.approx(m.target_variance * spec.sigma2, rel=1e-12)

    def test_bounds(self):
        d = normalize_features(synth_function("gaussian_wells", 2, 20, 5))
        m = fit_square(d.points, d.targets, KernelSpec(l=0.5), 0.0)
        q = np.random.default_rng(0).uniform(-3, 3, size=(200, 2))
        v = predict_variance(m, q)
        assert np.all(v >= 0.0)
        assert np.all(v <= m.target_variance * m.spec.sigma2 + 1e-8)


class TestSelectBasisCenters:
    def test_all(self):
        np.testing.assert_array_equal(select_basis_centers(10, 10, 3), np.arange(10))

    def test_single_deterministic(self):
        a = select_basis_centers(10, 1, 42)
        assert a.shape == (1,)
        assert np.array_equal(a, select_basis_centers(10, 1, 42))

    def test_unique_in_range_over_seeds(self):
        for seed in range(1000):
            idx = select_basis_centers(10, 5, seed)
            assert len(set(idx.tolist())) == 5
            assert idx.min() >= 0 and idx.max() < 10
            assert np.all(np.diff(idx) > 0)

    def test_too_many(self):
        with pytest.raises(ValueError):
            select_basis_centers(4, 5, 0)
        with pytest.raises(ValueError):
            select_basis_centers(4, 0, 0)


class TestFitRect:
    def test_square_limit_is_exact(self, wells3d):
        m = fit_rect(wells3d.points, wells3d.targets, np.arange(wells3d.n), KernelSpec(l=0.0))
        assert m.rmse_res <= 1e-6 * wells3d.targets.std()

    def test_one_column_closed_form(self):
        spec = KernelSpec(l=0.0)
        x = np.array([[0.0], [0.8]])
        f = np.array([2.0, -1.0])
        m = fit_rect(x, f, [1], spec)
        b = np.array([kernel_eval(spec, x[0], x[1]), 1.0])
        expected = (b[0] * f[0] + b[1] * f[1]) / (b[0] ** 2 + b[1] ** 2)
        assert m.coefficients[0] == pytest.approx(expected, rel=1e-14)
        assert m.rmse_res == pytest.approx(math.sqrt(np.mean((f - b * expected) ** 2)), rel=1e-12)

    @pytest.mark.slow
    def test_six_dim_grid_positive(self):
        d = normalize_features(synth_function("additive_sine", 6, 2000, 9))
        idx = select_basis_centers(2000, 1000, 9)
        for l in (1.5, 2.0, 2.5, 3.0):
            r = fit_rect(d.points, d.targets, idx, KernelSpec(l=l)).rmse_res
            assert math.isfinite(r) and r > 0.0

    def test_rejects_duplicate_indices(self, wells3d):
        with pytest.raises(ValueError, match="duplicate"):
            fit_rect(wells3d.points, wells3d.targets, [1, 2, 2], KernelSpec())

    def test_rejects_duplicate_center_points(self):
        x = np.array([[0.0], [0.0], [1.0]])
        with pytest.raises(ValueError, match="duplicate points"):
            fit_rect(x, [1.0, 1.0, 2.0], [0, 1], KernelSpec())

    def test_duplicate_training_points_allowed(self):
        x = np.array([[0.0], [0.0], [1.0], [2.0]])
        m = fit_rect(x, [1.0, 1.2, 2.0, 0.5], [0, 2], KernelSpec())
        assert m.rmse_res > 0.0

    def test_index_out_of_range(self, wells3d):
        with pytest.raises(ValueError, match="range"):
            fit_rect(wells3d.points, wells3d.targets, [0, wells3d.n], KernelSpec())


class TestResidualRmse:
    def test_exact_fit_targets_give_zero(self, wells3d):
        idx = select_basis_centers(wells3d.n, 40, 0)
        m = fit_rect(wells3d.points, wells3d.targets, idx, KernelSpec(l=0.0))
        assert residual_rmse(m, wells3d.points, predict_rect(m, wells3d.points)) == 0.0

    def test_single_point_offset(self, wells3d):
        m = fit_rect(wells3d.points, wells3d.targets, [0, 1, 2], KernelSpec(l=0.0))
        q = np.array([[0.1, 0.2, 0.3]])
        assert residual_rmse(m, q, predict_rect(m, q) + 3.0) == pytest.approx(3.0, rel=1e-15)

    def test_replay_is_bit_identical(self, wells3d):
        idx = select_basis_centers(wells3d.n, 60, 1)
        m = fit_rect(wells3d.points, wells3d.targets, idx, KernelSpec(l=0.5))
        assert residual_rmse(m, wells3d.points, wells3d.targets) == m.rmse_res


class TestPredictRect:
    def test_center_of_square_fit(self, wells3d):
        m = fit_rect(wells3d.points, wells3d.targets, np.arange(wells3d.n), KernelSpec(l=0.0))
        assert predict_rect(m, wells3d.points[11])[0] == pytest.approx(
            wells3d.targets[11], abs=1e-6 * wells3d.targets.std()
        )

    def test_far(self, wells3d):
        m = fit_rect(wells3d.points, wells3d.targets, [3, 8, 20], KernelSpec(l=0.0))
        assert predict_rect(m, [[FAR, FAR, -FAR]])[0] == 0.0

    @pytest.mark.parametrize("family", list(KernelFamily))
    def test_matches_explicit_expansion(self, wells3d, family):
        spec = KernelSpec(family, l=0.2)
        idx = select_basis_centers(wells3d.n, 50, 2)
        m = fit_rect(wells3d.points, wells3d.targets, idx, spec)
        q = np.random.default_rng(6).uniform(-2, 2, size=(100, 3))
        got = predict_rect(m, q)
        ref = np.array([
            math.fsum(kernel_eval(spec, x, c) * w for c, w in zip(m.basis_centers, m.coefficients))
            for x in q
        ])
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


class TestRectVariance:
    def test_zero_at_center(self, wells3d):
        idx = select_basis_centers(wells3d.n, 30, 0)
        m = fit_rect(wells3d.points, wells3d.targets, idx, KernelSpec(l=-0.5))
        assert np.all(rect_variance(m, m.basis_centers) <= 1e-8 * m.target_variance)

    def test_prior_far_away(self, wells3d):
        m = fit_rect(wells3d.points, wells3d.targets, [1, 5, 9], KernelSpec(l=0.0, sigma2=2.0))
        assert rect_variance(m, [[FAR, 0, 0]])[0] == pytest.approx(2.0 * m.target_variance, rel=1e-12)

    def test_bounds(self, wells3d):
        idx = select_basis_centers(wells3d.n, 100, 3)
        for l in (-1.0, 0.0, 1.0, 2.0):
            m = fit_rect(wells3d.points, wells3d.targets, idx, KernelSpec(l=l))
            q = np.random.default_rng(1).uniform(-2, 2, size=(50, 3))
            v = rect_variance(m, q)
            assert np.all(v >= 0.0)
            assert np.all(v <= m.target_variance * m.spec.sigma2 + 1e-8)

    def test_jitter_option(self, wells3d):
        m = fit_rect(wells3d.points, wells3d.targets, [1, 5, 9], KernelSpec(l=0.0))
        q = wells3d.points[[1]]
        assert rect_variance(m, q, delta=1e-2)[0] > rect_variance(m, q)[0]

    def test_dimension_mismatch(self, wells3d):
        m = fit_rect(wells3d.points, wells3d.targets, [1, 5, 9], KernelSpec(l=0.0))
        with pytest.raises(ValueError, match="dimension"):
            rect_variance(m, [[0.0]])
        with pytest.raises(ValueError, match="dimension"):
            predict_rect(m, [[0.0]])


class TestInvariants:
    def test_square_limit_matches_square_gpr(self):
        d = normalize_features(synth_function("gaussian_wells", 3, 300, 2))
        spec = KernelSpec(l=0.0)
        r = fit_rect(d.points, d.targets, np.arange(d.n), spec)
        s = fit_square(d.points, d.targets, spec, 0.0)
        diff = np.max(np.abs(predict_rect(r, d.points) - predict_mean(s, d.points)))
        assert diff <= 1e-6 * d.targets.std()

    @pytest.mark.parametrize("l", [0.0, 1.0, 1.5, 2.0])
    def test_nested_basis_monotone(self, l):
        d = normalize_features(synth_function("additive_sine", 6, 600, 3))
        perm = np.random.default_rng(0).permutation(d.n)
        res = [fit_rect(d.points, d.targets, perm[:m], KernelSpec(l=l)).rmse_res for m in (50, 100, 200, 400)]
        slack = 1e-10 * d.targets.std()
        assert all(b <= a + slack for a, b in zip(res, res[1:]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 30), st.floats(-1.0, 1.0))
def test_nested_basis_monotone_random_sets(seed, m_small, l):
    d = normalize_features(synth_function("gaussian_wells", 2, 60, seed))
    perm = np.random.default_rng(seed).permutation(d.n)
    small = fit_rect(d.points, d.targets, perm[:m_small], KernelSpec(l=l)).rmse_res
    large = fit_rect(d.points, d.targets, perm[: m_small + 10], KernelSpec(l=l)).rmse_res
    assert large <= small + 1e-10 * d.targets.std()

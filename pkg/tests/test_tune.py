import math
import warnings

import numpy as np
import pytest

from rectgpr import normalize_features, synth_function
from rectgpr.data import SplitSpec, split
from rectgpr.kernel import KernelSpec
from rectgpr.solver import SolverError
from rectgpr import tune
from rectgpr.tune import (
    OverfitRiskWarning,
    ScanResult,
    TrialRecord,
    check_basis_ratio,
    log_marginal_likelihood,
    mle_scan,
    scan_lengthscale,
    select_optimal,
)


def make_result(ls, res):
    rows = [TrialRecord(n=10, m=5, l=l, delta=0.0, rmse_res=r) for l, r in zip(ls, res)]
    return ScanResult(rows=rows, seed=0, selected=tune._argbest(rows, "rmse_res"), spec_template=KernelSpec())


@pytest.fixture(scope="module")
def sine6():
    d = normalize_features(synth_function("additive_sine", 6, 1600, 21))
    return split(d, SplitSpec(400, 21))


class TestSelectOptimal:
    def test_argmin(self):
        r = make_result([1.5, 2.0, 2.5], [3.0, 1.0, 2.0])
        assert r.selected == 1
        assert select_optimal(r).l == 2.0

    def test_tie_prefers_smaller_l(self):
        r = make_result([2.5, 2.0], [1.0, 1.0])
        assert select_optimal(r).l == 2.0

    def test_tied_and_clear_minima(self):
        # a tie between two grid values, then a clear minimum
        assert select_optimal(make_result([1.5, 2.0, 2.5, 3.0], [22.1, 15.3, 15.3, 20.6])).l == 2.0
        assert select_optimal(make_result([1.5, 2.0, 2.5, 3.0], [19.4, 13.2, 13.5, 15.7])).l == 2.0

    def test_failed_rows_skipped(self):
        rows = [TrialRecord(n=1, m=1, l=1.0, delta=0.0, error="boom"),
                TrialRecord(n=1, m=1, l=2.0, delta=0.0, rmse_res=5.0)]
        assert tune._argbest(rows, "rmse_res") == 1

    def test_no_successful_rows(self):
        rows = [TrialRecord(n=1, m=1, l=1.0, delta=0.0, error="boom")]
        r = ScanResult(rows=rows, seed=0, selected=0, spec_template=KernelSpec())
        with pytest.raises(RuntimeError):
            select_optimal(r)

    def test_keeps_template(self):
        r = make_result([0.5], [1.0])
        r.spec_template = KernelSpec("matern32", l=9.0, sigma2=2.0)
        assert select_optimal(r) == KernelSpec("matern32", l=0.5, sigma2=2.0)


class TestScan:
    def test_single_value_grid(self, sine6):
        tr, _ = sine6
        r = scan_lengthscale(tr.points, tr.targets, 100, [1.7], KernelSpec(), seed=0)
        assert r.selected == 0 and r.selected_row.l == 1.7
        assert select_optimal(r).l == 1.7

    def test_records_test_metrics(self, sine6):
        tr, te = sine6
        r = scan_lengthscale(tr.points, tr.targets, 150, [1.0, 1.5], KernelSpec(), 3, te.points, te.targets)
        for row in r.rows:
            assert row.ok and row.n == tr.n and row.m == 150
            assert row.test_rmse > 0 and -1 <= row.test_pearson <= 1 and -1 <= row.train_pearson <= 1
            assert row.wall_time_s >= 0

    def test_selected_is_recomputed_argmin(self, sine6):
        tr, _ = sine6
        r = scan_lengthscale(tr.points, tr.targets, 150, [0.0, 0.5, 1.0, 1.5, 2.0], KernelSpec(), 4)
        res = [row.rmse_res for row in r.rows]
        assert r.selected == int(np.argmin(res))

    def test_deterministic_including_concurrency(self, sine6):
        tr, te = sine6
        args = (tr.points, tr.targets, 120, [0.5, 1.0, 1.5, 2.0], KernelSpec(), 8, te.points, te.targets)
        a = scan_lengthscale(*args, max_workers=1).to_dict()
        b = scan_lengthscale(*args, max_workers=1).to_dict()
        c = scan_lengthscale(*args, max_workers=4).to_dict()
        assert a == b == c

    def test_positive_scaling(self, sine6):
        tr, _ = sine6
        grid = [0.5, 1.0, 1.5, 2.0]
        a = scan_lengthscale(tr.points, tr.targets, 100, grid, KernelSpec(), 2)
        b = scan_lengthscale(tr.points, 7.5 * tr.targets, 100, grid, KernelSpec(), 2)
        assert a.selected == b.selected
        for ra, rb in zip(a.rows, b.rows):
            assert rb.rmse_res == pytest.approx(7.5 * ra.rmse_res, rel=1e-9)

    def test_shared_center_draw(self, sine6):
        tr, _ = sine6
        r = scan_lengthscale(tr.points, tr.targets, 50, [1.0, 2.0], KernelSpec(), 5)
        from rectgpr.gpr import select_basis_centers

        np.testing.assert_array_equal(r.center_indices, select_basis_centers(tr.n, 50, 5))

    def test_failed_trial_is_recorded(self, sine6, monkeypatch):
        tr, _ = sine6
        real = tune._fit_rect

        def flaky(X, f, idx, spec, opts, center):
            if spec.l == 2.0:
                raise SolverError("synthetic breakdown")
            return real(X, f, idx, spec, opts, center)

        monkeypatch.setattr(tune, "_fit_rect", flaky)
        r = scan_lengthscale(tr.points, tr.targets, 50, [1.0, 2.0], KernelSpec(), 0)
        assert r.rows[1].error and "synthetic breakdown" in r.rows[1].error
        assert r.rows[0].ok and r.selected == 0

    def test_all_failed(self, sine6, monkeypatch):
        tr, _ = sine6

        def broken(*a):
            raise np.linalg.LinAlgError("nope")

        monkeypatch.setattr(tune, "_fit_rect", broken)
        with pytest.raises(RuntimeError, match="all trials failed"):
            scan_lengthscale(tr.points, tr.targets, 50, [1.0, 2.0], KernelSpec(), 0)

    def test_bad_arguments(self, sine6):
        tr, _ = sine6
        with pytest.raises(ValueError):
            scan_lengthscale(tr.points, tr.targets, 50, [], KernelSpec(), 0)
        with pytest.raises(ValueError):
            scan_lengthscale(tr.points, tr.targets, tr.n + 1, [1.0], KernelSpec(), 0)

    @pytest.mark.slow
    def test_residual_argmin_tracks_test_argmin(self):
        d = normalize_features(synth_function("additive_sine", 6, 6000, 30))
        tr, te = split(d, SplitSpec(2000, 30))
        grid = [1.0, 1.5, 2.0, 2.5, 3.0]
        r = scan_lengthscale(tr.points, tr.targets, 1000, grid, KernelSpec(), 31, te.points, te.targets)
        test_best = int(np.argmin([row.test_rmse for row in r.rows]))
        assert abs(r.selected - test_best) <= 1


def test_basis_ratio_warning():
    with pytest.warns(OverfitRiskWarning):
        assert check_basis_ratio(100, 51) is False
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_basis_ratio(100, 50) is True


class TestMle:
    def test_single_point_zero_target(self):
        ll = log_marginal_likelihood(np.array([[1.0 + 1e-12]]), [0.0])
        assert ll == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-9)
        assert ll == pytest.approx(-0.9189385, abs=1e-7)

    def test_diagonal_closed_form(self):
        ll = log_marginal_likelihood(4 * np.eye(2), [0.0, 0.0])
        assert ll == pytest.approx(-0.5 * 2 * math.log(4) - math.log(2 * math.pi), rel=1e-14)
        assert ll == pytest.approx(-3.2242, abs=1e-4)

    def test_data_term(self):
        ll = log_marginal_likelihood(4 * np.eye(2), [2.0, 2.0])
        assert ll == pytest.approx(-math.log(4) - 0.5 * 2.0 - math.log(2 * math.pi), rel=1e-14)

    def test_printed_sign_variant(self):
        std = log_marginal_likelihood(4 * np.eye(2), [0.0, 0.0])
        alt = log_marginal_likelihood(4 * np.eye(2), [0.0, 0.0], sign="paper")
        assert alt - std == pytest.approx(2 * math.log(4), rel=1e-14)
        with pytest.raises(ValueError):
            log_marginal_likelihood(np.eye(1), [0.0], sign="other")

    def test_scan_selects_argmax(self, sine6):
        tr, _ = sine6
        grid = [-0.5, 0.0, 0.5, 1.0]
        r = mle_scan(tr.points[:200], tr.targets[:200], grid, 1e-4, KernelSpec())
        ll = [row.log_likelihood for row in r.rows]
        assert r.criterion == "mle" and r.selected == int(np.argmax(ll))
        assert select_optimal(r).l == grid[r.selected]

    def test_requires_positive_delta(self, sine6):
        tr, _ = sine6
        with pytest.raises(ValueError):
            mle_scan(tr.points, tr.targets, [1.0], 0.0, KernelSpec())

    def test_failed_factorization_is_recorded(self):
        # nearly coincident points: fine at a tiny length scale, singular at a huge one
        x = np.zeros((5, 2))
        x[:, 0] = np.linspace(0, 1e-3, 5)
        r = mle_scan(x, np.arange(5.0), [-12.0, 8.0], 1e-300, KernelSpec())
        assert r.rows[0].ok and not r.rows[1].ok
        assert "increase delta" in r.rows[1].error
        assert r.selected == 0
        with pytest.raises(RuntimeError, match="all trials failed"):
            mle_scan(x, np.arange(5.0), [8.0], 1e-300, KernelSpec())

    @pytest.mark.slow
    def test_mle_fails_on_sparse_data_where_residual_does_not(self):
        # 500 training points in 6-D: residual argmin matches the test argmin,
        # the likelihood maximum is far from it
        d = normalize_features(synth_function("rosenbrock_like", 6, 5500, 0))
        tr, te = split(d, SplitSpec(500, 0))
        grid = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
        rect = scan_lengthscale(tr.points, tr.targets, 250, grid, KernelSpec(), 1, te.points, te.targets)
        mle = mle_scan(tr.points, tr.targets, grid, 1e-4, KernelSpec(),
                       test_points=te.points, test_targets=te.targets)
        rect_test_best = int(np.argmin([r.test_rmse for r in rect.rows]))
        square_test_best = int(np.argmin([r.test_rmse for r in mle.rows]))
        assert abs(rect.selected - rect_test_best) <= 1
        assert abs(mle.selected - rect_test_best) > 1
        assert abs(mle.selected - square_test_best) > 1

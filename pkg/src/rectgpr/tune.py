"""Grid search over the log length scale.

``scan_lengthscale`` fits the rectangular model once per grid value with
a single shared draw of basis centers and picks the value with the
smallest fit residual ``rmse_res``.  ``mle_scan`` is the classical
log-marginal-likelihood baseline on a square model.
"""

from __future__ import annotations

import logging
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import pearson, rmse
from .gpr import _fit_rect, fit_square, predict_mean, predict_rect, select_basis_centers
from .kernel import KernelSpec, gram_with_jitter
from .solver import SvdSolveOptions, log_det_psd, solve_square

__all__ = [
    "DEFAULT_L_GRID",
    "OverfitRiskWarning",
    "TrialRecord",
    "ScanResult",
    "check_basis_ratio",
    "scan_lengthscale",
    "select_optimal",
    "log_marginal_likelihood",
    "mle_scan",
]

log = logging.getLogger(__name__)

DEFAULT_L_GRID = (1.5, 2.0, 2.5, 3.0)

# numerical breakdowns that mark a trial as failed rather than aborting the scan
_TRIAL_ERRORS = (np.linalg.LinAlgError, ValueError, FloatingPointError, MemoryError)


class OverfitRiskWarning(UserWarning):
    """More than about half of the fitting points are used as basis centers."""


def check_basis_ratio(n: int, m: int) -> bool:
    """Warn and return False when ``m > n / 2``."""
    if 2 * m > n:
        warnings.warn(
            f"M={m} basis centers exceed half of N={n} points; the residual "
            "may no longer track the test error (N/M of about 2 is recommended)",
            OverfitRiskWarning,
            stacklevel=2,
        )
        return False
    return True


@dataclass
class TrialRecord:
    n: int
    m: int
    l: float
    delta: float
    rmse_res: float | None = None
    test_rmse: float | None = None
    train_pearson: float | None = None
    test_pearson: float | None = None
    log_likelihood: float | None = None
    wall_time_s: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ScanResult:
    rows: list[TrialRecord]
    seed: int | None
    selected: int
    spec_template: KernelSpec
    criterion: str = "rmse_res"
    center_indices: np.ndarray | None = field(default=None, repr=False)

    @property
    def selected_row(self) -> TrialRecord:
        return self.rows[self.selected]

    def to_dict(self, *, timings: bool = False) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not timings:
                d.pop("wall_time_s")
            rows.append(d)
        out = {
            "criterion": self.criterion,
            "seed": self.seed,
            "selected": self.selected,
            "kernel": self.spec_template.to_dict(),
            "rows": rows,
        }
        if self.center_indices is not None:
            out["center_indices"] = [int(i) for i in self.center_indices]
        return out


def _argbest(rows: list[TrialRecord], key: str, maximize: bool = False) -> int:
    """Index of the best successful row; ties go to the smallest l."""
    best = None
    for i, r in enumerate(rows):
        v = getattr(r, key)
        if not r.ok or v is None or not math.isfinite(v):
            continue
        score = -v if maximize else v
        if best is None or (score, r.l) < best[0]:
            best = ((score, r.l), i)
    if best is None:
        raise RuntimeError("all trials failed")
    return best[1]


def _workers(max_workers: int | None) -> int:
    if max_workers is not None:
        return max(1, int(max_workers))
    try:
        return max(1, int(os.environ.get("RECTGPR_THREADS", "1")))
    except ValueError:
        return 1


def _run_grid(fn, l_grid, max_workers):
    # results come back in grid order whatever the completion order
    n = _workers(max_workers)
    if n == 1 or len(l_grid) == 1:
        return [fn(l) for l in l_grid]
    with ThreadPoolExecutor(max_workers=min(n, len(l_grid))) as pool:
        return list(pool.map(fn, l_grid))


def scan_lengthscale(points, targets, m: int, l_grid, spec_template: KernelSpec,
                     seed: int, test_points=None, test_targets=None, *,
                     delta: float = 0.0, truncation_tol: float | None = None,
                     center_indices=None, center_targets: bool = False,
                     max_workers: int | None = None) -> ScanResult:
    """Rectangular fit at every ``l`` in ``l_grid``; select the smallest ``rmse_res``.

    One set of ``m`` basis centers is drawn from ``seed`` (or taken from
    ``center_indices``) and reused for every grid value.  When a test set
    is supplied, each row also records test RMSE and train/test Pearson r.
    Failed fits are kept as rows with ``error`` set.
    """
    l_grid = [float(l) for l in l_grid]
    if not l_grid:
        raise ValueError("l_grid is empty")
    X = np.asarray(points, dtype=np.float64)
    f = np.asarray(targets, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= N, got m={m}, N={n}")
    has_test = test_points is not None
    if has_test:
        Xt = np.asarray(test_points, dtype=np.float64)
        ft = np.asarray(test_targets, dtype=np.float64)
    if center_indices is None:
        center_indices = select_basis_centers(n, m, seed)
    idx = np.asarray(center_indices, dtype=np.intp)
    opts = SvdSolveOptions(truncation_tol=truncation_tol, delta=delta)

    def trial(l: float) -> TrialRecord:
        rec = TrialRecord(n=n, m=m, l=l, delta=delta)
        t0 = time.perf_counter()
        try:
            model, fitted = _fit_rect(X, f, idx, spec_template.with_l(l), opts, center_targets)
            rec.rmse_res = model.rmse_res
            if has_test:
                pred = predict_rect(model, Xt)
                rec.test_rmse = rmse(pred, ft)
                rec.train_pearson = pearson(fitted, f)
                rec.test_pearson = pearson(pred, ft)
        except _TRIAL_ERRORS as exc:
            log.warning("trial l=%g failed: %s", l, exc)
            rec.error = f"{type(exc).__name__}: {exc}"
        rec.wall_time_s = time.perf_counter() - t0
        return rec

    rows = _run_grid(trial, l_grid, max_workers)
    return ScanResult(
        rows=rows,
        seed=seed,
        selected=_argbest(rows, "rmse_res"),
        spec_template=spec_template,
        center_indices=idx,
    )


def select_optimal(result: ScanResult) -> KernelSpec:
    """Kernel spec carrying the log length scale of the best row."""
    maximize = result.criterion == "mle"
    key = "log_likelihood" if maximize else "rmse_res"
    i = _argbest(result.rows, key, maximize=maximize)
    return result.spec_template.with_l(result.rows[i].l)


def log_marginal_likelihood(K, f, *, sign: str = "standard") -> float:
    """``-1/2 ln|K| - 1/2 f^T K^-1 f - M/2 ln(2 pi)``.

    ``sign="paper"`` flips the log-determinant term to ``+1/2 ln|K|``.
    """
    if sign not in ("standard", "paper"):
        raise ValueError(f"sign must be 'standard' or 'paper', got {sign!r}")
    f = np.asarray(f, dtype=np.float64)
    logdet = log_det_psd(K)
    alpha = solve_square(K, f)
    det_term = 0.5 * logdet if sign == "paper" else -0.5 * logdet
    return float(det_term - 0.5 * (f @ alpha) - 0.5 * f.shape[0] * math.log(2.0 * math.pi))


def mle_scan(points, targets, l_grid, delta: float, spec_template: KernelSpec, *,
             sign: str = "standard", test_points=None, test_targets=None,
             max_workers: int | None = None) -> ScanResult:
    """Log marginal likelihood of the square model at every ``l``; select the maximum.

    With a test set, each row also records the square model's test RMSE
    and Pearson r, for comparison with :func:`scan_lengthscale`.
    """
    if not delta > 0.0:
        raise ValueError(f"mle_scan needs delta > 0, got {delta}")
    l_grid = [float(l) for l in l_grid]
    if not l_grid:
        raise ValueError("l_grid is empty")
    X = np.asarray(points, dtype=np.float64)
    f = np.asarray(targets, dtype=np.float64)
    n = X.shape[0]
    has_test = test_points is not None

    def trial(l: float) -> TrialRecord:
        rec = TrialRecord(n=n, m=n, l=l, delta=delta)
        t0 = time.perf_counter()
        try:
            spec = spec_template.with_l(l)
            K = gram_with_jitter(spec, X, delta)
            rec.log_likelihood = log_marginal_likelihood(K, f, sign=sign)
            if has_test:
                model = fit_square(X, f, spec, delta)
                pred = predict_mean(model, test_points)
                rec.test_rmse = rmse(pred, test_targets)
                rec.train_pearson = pearson(predict_mean(model, X), f)
                rec.test_pearson = pearson(pred, test_targets)
        except _TRIAL_ERRORS as exc:
            log.warning("MLE trial l=%g failed: %s", l, exc)
            rec.error = f"{type(exc).__name__}: {exc}"
        rec.wall_time_s = time.perf_counter() - t0
        return rec

    rows = _run_grid(trial, l_grid, max_workers)
    return ScanResult(
        rows=rows,
        seed=None,
        selected=_argbest(rows, "log_likelihood", maximize=True),
        spec_template=spec_template,
        criterion="mle",
    )

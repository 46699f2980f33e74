"""Square and rectangular Gaussian process regression.

The square model is classical GPR: one basis function per training
point, coefficients ``K^+ f``.  The rectangular model keeps only ``M``
of the ``N`` training points as basis centers and solves the
overdetermined ``N x M`` system ``B c = f`` in the least-squares sense.
Its residual is what the tuning code minimizes.

The prior mean is zero and targets are used in their raw units unless
``center_targets=True`` is passed at fit time.  Variances are scaled by
the variance of the training targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kernel import KernelSpec, _as_points, cross_covariance, gram_with_jitter
from .solver import SolverError, SvdSolveOptions, TruncatedSvd, psd_pinv_factor, solve_square

__all__ = [
    "SquareGprModel",
    "RectGprModel",
    "fit_square",
    "predict_mean",
    "predict_variance",
    "select_basis_centers",
    "fit_rect",
    "residual_rmse",
    "predict_rect",
    "rect_variance",
]


def _targets(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"targets must have length {n}, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain non-finite values")
    return y


def _query(model_points: np.ndarray, query) -> np.ndarray:
    q = _as_points(query, "query")
    if q.shape[1] != model_points.shape[1]:
        raise ValueError(
            f"dimension mismatch: model has D={model_points.shape[1]}, query has D={q.shape[1]}"
        )
    return q


def _rms(residual: np.ndarray) -> float:
    return float(np.sqrt(residual @ residual / residual.shape[0]))


def _posterior_variance(spec, centers, factor, query, target_variance):
    # K* K^+ K*^T == |K* W|^2 with K^+ = W W^T
    proj = cross_covariance(spec, query, centers) @ factor
    reduction = np.einsum("ij,ij->i", proj, proj)
    var = target_variance * (spec.sigma2 - reduction)
    return np.maximum(var, 0.0)


@dataclass(frozen=True, eq=False)
class SquareGprModel:
    spec: KernelSpec
    delta: float
    train_points: np.ndarray
    train_targets: np.ndarray
    coefficients: np.ndarray
    target_variance: float
    target_mean: float = 0.0

    @cached_property
    def _pinv_factor(self) -> np.ndarray:
        return psd_pinv_factor(gram_with_jitter(self.spec, self.train_points, self.delta))


@dataclass(frozen=True, eq=False)
class RectGprModel:
    spec: KernelSpec
    basis_centers: np.ndarray
    coefficients: np.ndarray
    n_fit: int
    rmse_res: float
    target_variance: float
    target_mean: float = 0.0
    center_indices: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.basis_centers.shape[0]

    @cached_property
    def _pinv_factor(self) -> np.ndarray:
        return psd_pinv_factor(gram_with_jitter(self.spec, self.basis_centers, 0.0))


def fit_square(points, targets, spec: KernelSpec, delta: float = 0.0, *,
               center_targets: bool = False,
               opts: SvdSolveOptions | None = None) -> SquareGprModel:
    """Classical GPR on all ``points`` with jitter ``delta`` on the diagonal."""
    X = _as_points(points, "points")
    f = _targets(targets, X.shape[0])
    mean = float(f.mean()) if center_targets else 0.0
    K = gram_with_jitter(spec, X, delta)
    try:
        coef = solve_square(K, f - mean, opts)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"square GPR fit failed: {exc}") from exc
    return SquareGprModel(
        spec=spec,
        delta=float(delta),
        train_points=X,
        train_targets=f,
        coefficients=coef,
        target_variance=float(np.var(f)),
        target_mean=mean,
    )


def predict_mean(model: SquareGprModel, query) -> np.ndarray:
    q = _query(model.train_points, query)
    return cross_covariance(model.spec, q, model.train_points) @ model.coefficients + model.target_mean


def predict_variance(model: SquareGprModel, query) -> np.ndarray:
    """Posterior variance in target units squared, clamped at zero."""
    q = _query(model.train_points, query)
    return _posterior_variance(model.spec, model.train_points, model._pinv_factor, q,
                               model.target_variance)


def select_basis_centers(n_points: int, m: int, seed: int) -> np.ndarray:
    """Sorted indices of ``m`` distinct points drawn uniformly from ``n_points``."""
    n_points, m = int(n_points), int(m)
    if m < 1:
        raise ValueError(f"need at least one basis center, got m={m}")
    if m > n_points:
        raise ValueError(f"cannot select {m} centers from {n_points} points")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_points, size=m, replace=False))


def _fit_rect(points, targets, center_indices, spec, opts, center_targets):
    X = _as_points(points, "points")
    f = _targets(targets, X.shape[0])
    idx = np.asarray(center_indices, dtype=np.intp).ravel()
    if idx.size < 1:
        raise ValueError("need at least one basis center")
    if idx.min() < 0 or idx.max() >= X.shape[0]:
        raise ValueError("center index out of range")
    if np.unique(idx).size != idx.size:
        raise ValueError("duplicate center indices")
    centers = X[idx]
    if np.unique(centers, axis=0).shape[0] != centers.shape[0]:
        raise ValueError("duplicate points selected as basis centers")

    mean = float(f.mean()) if center_targets else 0.0
    B = cross_covariance(spec, X, centers)
    try:
        c = TruncatedSvd(B, opts).solve(f - mean)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"rectangular GPR fit failed: {exc}") from exc
    fitted = B @ c + mean
    model = RectGprModel(
        spec=spec,
        basis_centers=centers,
        coefficients=c,
        n_fit=X.shape[0],
        rmse_res=_rms(f - fitted),
        target_variance=float(np.var(f)),
        target_mean=mean,
        center_indices=idx,
    )
    return model, fitted


def fit_rect(points, targets, center_indices, spec: KernelSpec,
             opts: SvdSolveOptions | None = None, *,
             center_targets: bool = False) -> RectGprModel:
    """Least-squares fit of ``f`` on the kernel functions centered at ``points[center_indices]``.

    The fitted model stores ``rmse_res``, the root-mean-square residual
    of the ``N x M`` system on the fitting points.
    """
    model, _ = _fit_rect(points, targets, center_indices, spec, opts, center_targets)
    return model


def predict_rect(model: RectGprModel, query) -> np.ndarray:
    q = _query(model.basis_centers, query)
    return cross_covariance(model.spec, q, model.basis_centers) @ model.coefficients + model.target_mean


def residual_rmse(model: RectGprModel, points, targets) -> float:
    """Root-mean-square of ``f - B c`` over the given points."""
    q = _query(model.basis_centers, points)
    f = _targets(targets, q.shape[0])
    return _rms(f - predict_rect(model, q))


def rect_variance(model: RectGprModel, query, delta: float = 0.0) -> np.ndarray:
    """Posterior variance using only the basis centers, with ``K^+`` for ``K^-1``.

    ``delta > 0`` adds jitter to the center covariance matrix before the
    pseudoinverse is taken.
    """
    q = _query(model.basis_centers, query)
    if delta:
        factor = psd_pinv_factor(gram_with_jitter(model.spec, model.basis_centers, delta))
    else:
        factor = model._pinv_factor
    return _posterior_variance(model.spec, model.basis_centers, factor, q, model.target_variance)

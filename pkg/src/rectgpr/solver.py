"""Dense least-squares machinery built on the singular value decomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "SolverError",
    "SvdSolveOptions",
    "TruncatedSvd",
    "psd_pinv_factor",
    "pseudo_solve",
    "normal_equation_solve",
    "solve_square",
    "log_det_psd",
]


class SolverError(np.linalg.LinAlgError):
    """A linear system could not be solved or factorized."""


@dataclass(frozen=True)
class SvdSolveOptions:
    """Options for :func:`pseudo_solve`.

    truncation_tol
        Relative singular-value cutoff.  Singular values at or below
        ``truncation_tol * s_max`` are discarded.  ``None`` selects
        ``eps * max(n, m)``.
    delta
        Added to every retained singular value before taking its
        reciprocal.  ``delta = 0`` gives the Moore-Penrose pseudoinverse.
    """

    truncation_tol: float | None = None
    delta: float = 0.0

    def __post_init__(self):
        if self.truncation_tol is not None and not self.truncation_tol >= 0.0:
            raise ValueError(f"truncation_tol must be >= 0, got {self.truncation_tol}")
        if not self.delta >= 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")

    def cutoff(self, shape: tuple[int, int]) -> float:
        if self.truncation_tol is None:
            return np.finfo(np.float64).eps * max(shape)
        return float(self.truncation_tol)


def _check_matrix(A, name="A") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if A.size == 0:
        raise ValueError(f"{name} is empty (shape {A.shape})")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def _check_rhs(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"right-hand side must have length {n}, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("right-hand side contains non-finite entries")
    return y


class TruncatedSvd:
    """Thin SVD ``A = U diag(s) V^T`` restricted to the retained singular triplets.

    ``inv_s`` holds the damped reciprocals ``1 / (s + delta)``, so
    ``solve(y) = V diag(inv_s) U^T y`` and ``pinv()`` is the (damped)
    pseudoinverse.
    """

    def __init__(self, A, opts: SvdSolveOptions | None = None):
        opts = opts or SvdSolveOptions()
        A = _check_matrix(A)
        try:
            u, s, vt = scipy.linalg.svd(A, full_matrices=False, check_finite=False)
        except np.linalg.LinAlgError:
            # gesdd occasionally fails to converge; gesvd is slower but robust
            u, s, vt = scipy.linalg.svd(
                A, full_matrices=False, check_finite=False, lapack_driver="gesvd"
            )
        self.shape = A.shape
        self.singular_values = s
        smax = s[0] if s.size else 0.0
        keep = s > opts.cutoff(A.shape) * smax
        self.rank = int(np.count_nonzero(keep))
        self.u = u[:, keep]
        self.vt = vt[keep]
        self.inv_s = 1.0 / (s[keep] + opts.delta)

    def solve(self, y) -> np.ndarray:
        y = _check_rhs(y, self.shape[0])
        return self.vt.T @ (self.inv_s * (self.u.T @ y))

    def pinv(self) -> np.ndarray:
        return (self.vt.T * self.inv_s) @ self.u.T


def psd_pinv_factor(K, opts: SvdSolveOptions | None = None) -> np.ndarray:
    """Matrix ``W`` with ``W @ W.T`` equal to the pseudoinverse of a symmetric PSD ``K``.

    Eigenvalues at or below the truncation cutoff, including round-off
    negatives, are discarded, so quadratic forms with the result are
    nonnegative by construction.  ``opts.delta`` is added to each
    retained eigenvalue, as in :class:`TruncatedSvd`.
    """
    opts = opts or SvdSolveOptions()
    K = _check_matrix(K, "K")
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"K must be square, got shape {K.shape}")
    w, v = scipy.linalg.eigh(K, check_finite=False)
    wmax = max(w[-1], 0.0)
    keep = w > opts.cutoff(K.shape) * wmax
    return v[:, keep] / np.sqrt(w[keep] + opts.delta)


def pseudo_solve(A, y, opts: SvdSolveOptions | None = None) -> np.ndarray:
    """Minimum-norm least-squares solution of ``A c = y`` via truncated SVD."""
    A = _check_matrix(A)
    y = _check_rhs(y, A.shape[0])
    return TruncatedSvd(A, opts).solve(y)


def normal_equation_solve(A, y) -> np.ndarray:
    """Solve ``A^T A c = A^T y`` by Cholesky.

    Independent check on :func:`pseudo_solve`; only trustworthy for
    well-conditioned ``A``.
    """
    A = _check_matrix(A)
    y = _check_rhs(y, A.shape[0])
    G = A.T @ A
    try:
        factor = scipy.linalg.cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"normal equations are singular: {exc}") from exc
    diag = np.diag(factor[0])
    # Cholesky pivots carry sqrt of the conditioning
    if (diag.min() / diag.max()) ** 2 <= np.finfo(np.float64).eps * G.shape[0]:
        raise SolverError("normal equations are numerically singular")
    return scipy.linalg.cho_solve(factor, A.T @ y, check_finite=False)


def solve_square(K, f, opts: SvdSolveOptions | None = None) -> np.ndarray:
    """Coefficients ``K^+ f`` for a symmetric covariance matrix ``K``."""
    K = _check_matrix(K, "K")
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"K must be square, got shape {K.shape}")
    scale = np.max(np.abs(K))
    if np.max(np.abs(K - K.T)) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise ValueError("K is not symmetric")
    return pseudo_solve(K, f, opts)


def log_det_psd(K) -> float:
    """``ln|K|`` of a symmetric positive-definite matrix from its Cholesky factor."""
    K = _check_matrix(K, "K")
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"K must be square, got shape {K.shape}")
    try:
        L = scipy.linalg.cholesky(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(
            "covariance matrix is not positive definite; increase delta"
        ) from exc
    return float(2.0 * np.sum(np.log(np.diag(L))))

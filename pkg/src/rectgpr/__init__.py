"""Rectangularized Gaussian process regression.

Fits classical (square) GPR and its rectangular variant, in which only a
subset of the training points serve as basis centers, and tunes the
kernel length scale by minimizing the residual of the rectangular
least-squares system.
"""

from .data import (
    Dataset,
    SplitSpec,
    load_dataset,
    normalize_features,
    pearson,
    rmse,
    save_dataset,
    split,
    synth_function,
)
from .gpr import (
    RectGprModel,
    SquareGprModel,
    fit_rect,
    fit_square,
    predict_mean,
    predict_rect,
    predict_variance,
    rect_variance,
    residual_rmse,
    select_basis_centers,
)
from .kernel import BACKEND, KernelFamily, KernelSpec, cross_covariance, gram_with_jitter, kernel_eval
from .solver import (
    SolverError,
    SvdSolveOptions,
    log_det_psd,
    normal_equation_solve,
    pseudo_solve,
    solve_square,
)
from .tune import ScanResult, TrialRecord, mle_scan, scan_lengthscale, select_optimal

__version__ = "0.1.0"

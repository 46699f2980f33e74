"""Isotropic covariance functions of the Matern family.

Only the closed-form members are provided: the squared exponential
(nu -> inf) and the half-integer Matern kernels nu = 1/2, 3/2, 5/2.  All
of them are parametrized by a *log* length scale ``l``, i.e. the
effective length scale is ``exp(l)``.

Covariance matrices are assembled by a compiled extension when it is
importable and by a numpy implementation otherwise.  Set
``RECTGPR_PURE_PYTHON=1`` to force the numpy path.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from . import _pykernels

try:
    if os.environ.get("RECTGPR_PURE_PYTHON"):
        raise ImportError("compiled kernels disabled by RECTGPR_PURE_PYTHON")
    from . import _ckernels as _backend_module

    BACKEND = "cython"
except ImportError:
    _backend_module = _pykernels
    BACKEND = "python"

__all__ = [
    "BACKEND",
    "KernelFamily",
    "KernelSpec",
    "kernel_eval",
    "cross_covariance",
    "gram_with_jitter",
]


class KernelFamily(str, enum.Enum):
    SQUARED_EXPONENTIAL = "se"
    MATERN12 = "matern12"
    MATERN32 = "matern32"
    MATERN52 = "matern52"

    @classmethod
    def parse(cls, name: str | "KernelFamily") -> "KernelFamily":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {
            "squared_exponential": "se",
            "rbf": "se",
            "exponential": "matern12",
            "matern_12": "matern12",
            "matern_32": "matern32",
            "matern_52": "matern52",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            known = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown kernel family {name!r} (known: {known})") from None

    @property
    def nu(self) -> float:
        return {
            KernelFamily.SQUARED_EXPONENTIAL: math.inf,
            KernelFamily.MATERN12: 0.5,
            KernelFamily.MATERN32: 1.5,
            KernelFamily.MATERN52: 2.5,
        }[self]


_FAMILY_CODE = {
    KernelFamily.SQUARED_EXPONENTIAL: 0,
    KernelFamily.MATERN12: 1,
    KernelFamily.MATERN32: 2,
    KernelFamily.MATERN52: 3,
}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters.

    Parameters
    ----------
    family : KernelFamily
        Which member of the Matern family to use.
    l : float
        Log length scale; distances are measured in units of ``exp(l)``.
    sigma2 : float
        Prefactor (kernel value at zero distance).
    """

    family: KernelFamily = KernelFamily.SQUARED_EXPONENTIAL
    l: float = 0.0
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        object.__setattr__(self, "l", float(self.l))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not math.isfinite(self.l):
            raise ValueError(f"log length scale must be finite, got {self.l}")
        if not (self.sigma2 > 0.0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2}")

    @property
    def length_scale(self) -> float:
        return math.exp(self.l)

    def with_l(self, l: float) -> "KernelSpec":
        return replace(self, l=l)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "l": self.l, "sigma2": self.sigma2}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(family=d["family"], l=d["l"], sigma2=d.get("sigma2", 1.0))


def _scale(spec: KernelSpec) -> float:
    # SE multiplies r**2, the Matern forms multiply r
    ell = spec.length_scale
    if spec.family is KernelFamily.SQUARED_EXPONENTIAL:
        return 0.5 / (ell * ell)
    return math.sqrt(2.0 * spec.family.nu) / ell


def _as_points(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be an (n, D) array with D >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return np.ascontiguousarray(arr)


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    """Covariance between two single points."""
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(x2, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite coordinates")

    r2 = 0.0
    for u, v in zip(a.tolist(), b.tolist()):
        d = u - v
        r2 += d * d
    r2 = max(r2, 0.0)
    scale = _scale(spec)
    s2 = spec.sigma2
    if spec.family is KernelFamily.SQUARED_EXPONENTIAL:
        return s2 * math.exp(-(r2 * scale))
    t = math.sqrt(r2) * scale
    if spec.family is KernelFamily.MATERN12:
        return s2 * math.exp(-t)
    if spec.family is KernelFamily.MATERN32:
        return s2 * (1.0 + t) * math.exp(-t)
    return s2 * (1.0 + t + t * t / 3.0) * math.exp(-t)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RECTGPR_KERNEL_THREADS", "1")))
    except ValueError:
        return 1


def cross_covariance(spec: KernelSpec, rows, cols, *, backend: str | None = None) -> np.ndarray:
    """Matrix of ``k(rows[i], cols[j])``; no jitter is added.

    ``backend`` may be ``"cython"`` or ``"python"`` to bypass the
    import-time choice (used by tests and the benchmark).
    """
    rows = _as_points(rows, "rows")
    cols = _as_points(cols, "cols")
    if rows.shape[1] != cols.shape[1]:
        raise ValueError(f"dimension mismatch: rows have D={rows.shape[1]}, cols have D={cols.shape[1]}")

    if backend is None:
        impl = _backend_module
    elif backend == "python":
        impl = _pykernels
    elif backend == "cython":
        if BACKEND != "cython":
            raise RuntimeError("compiled kernels are not available")
        impl = _backend_module
    else:
        raise ValueError(f"unknown backend {backend!r}")

    return impl.cross_covariance(
        _FAMILY_CODE[spec.family], _scale(spec), spec.sigma2, rows, cols, _threads()
    )


def gram_with_jitter(spec: KernelSpec, points, delta: float = 0.0) -> np.ndarray:
    """Covariance matrix among ``points`` with ``delta`` added to the diagonal."""
    delta = float(delta)
    if not delta >= 0.0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    pts = _as_points(points, "points")
    K = cross_covariance(spec, pts, pts)
    if delta:
        K[np.diag_indices_from(K)] += delta
    return K

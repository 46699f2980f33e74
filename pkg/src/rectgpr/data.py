"""Datasets, normalization, train/test splitting, synthetic targets and fit metrics.

Datasets are CSV files with a header ``x1,...,xD,f``: ``D`` coordinate
columns followed by the scalar target.

Synthetic targets (``synth_function``) sample points uniformly in
``[-1, 1]^D`` with ``numpy.random.default_rng(seed).uniform(-1, 1, (n, D))``
and evaluate one of these closed forms:

``additive_sine``
    ``f(x) = sum_i sin(pi * x_i)``
``gaussian_wells``
    Two wells of depth ``WELL_DEPTH`` and width ``WELL_WIDTH`` centered at
    ``(+0.5, ..., +0.5)`` and ``(-0.5, ..., -0.5)``::

        f(x) = -WELL_DEPTH * (1 - prod_k (1 - exp(-|x - c_k|^2 / (2 WELL_WIDTH^2))))

    so ``f(c_k) = -WELL_DEPTH`` exactly and ``f -> 0`` far from both wells.
``rosenbrock_like``
    ``f(x) = sum_{i<D-1} [(1 - x_i)^2 + 100 (x_{i+1} - x_i^2)^2]``; for
    ``D = 1`` this reduces to ``(1 - x_0)^2``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "SplitSpec",
    "DatasetError",
    "HeaderError",
    "CellParseError",
    "ColumnCountError",
    "load_dataset",
    "save_dataset",
    "normalize_features",
    "apply_normalization",
    "split_indices",
    "split",
    "synth_function",
    "SYNTH_FUNCTIONS",
    "WELL_DEPTH",
    "WELL_WIDTH",
    "rmse",
    "pearson",
]

WELL_DEPTH = 1.0
WELL_WIDTH = 0.5


class DatasetError(ValueError):
    pass


class HeaderError(DatasetError):
    pass


class CellParseError(DatasetError):
    def __init__(self, row: int, column: str, text: str):
        self.row = row
        self.column = column
        self.text = text
        super().__init__(f"row {row}, column {column}: cannot parse {text!r} as a finite number")


class ColumnCountError(DatasetError):
    def __init__(self, row: int, expected: int, found: int):
        self.row = row
        super().__init__(f"row {row}: expected {expected} columns, found {found}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sample points with scalar targets.

    ``points`` relate to the raw coordinates by
    ``points = (raw - feature_mean) / feature_std``; both are identity
    (zeros / ones) until :func:`normalize_features` is applied.
    """

    points: np.ndarray
    targets: np.ndarray
    feature_std: np.ndarray | None = None
    feature_mean: np.ndarray | None = None
    normalized: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        tgt = np.asarray(self.targets, dtype=np.float64).ravel()
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DatasetError(f"points must be (n, D) with n, D >= 1, got shape {pts.shape}")
        if tgt.shape[0] != pts.shape[0]:
            raise DatasetError(f"{pts.shape[0]} points but {tgt.shape[0]} targets")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(tgt))):
            raise DatasetError("dataset contains non-finite values")
        std = np.ones(pts.shape[1]) if self.feature_std is None else np.asarray(self.feature_std, float)
        mean = np.zeros(pts.shape[1]) if self.feature_mean is None else np.asarray(self.feature_mean, float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "targets", tgt)
        object.__setattr__(self, "feature_std", std)
        object.__setattr__(self, "feature_mean", mean)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return replace(self, points=self.points[idx], targets=self.targets[idx])

    def raw_points(self) -> np.ndarray:
        return self.points * self.feature_std + self.feature_mean


@dataclass(frozen=True)
class SplitSpec:
    n_train: int
    seed: int = 0


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise CellParseError(row, column, text) from None
    if not math.isfinite(value):
        raise CellParseError(row, column, text)
    return value


def load_dataset(path) -> Dataset:
    """Read a ``x1,...,xD,f`` CSV file.  Rows are numbered as file lines (header = 1)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise HeaderError(f"{path}: empty file") from None
        dim = len(header) - 1
        expected = [f"x{i + 1}" for i in range(dim)] + ["f"]
        if dim < 1 or header != expected:
            raise HeaderError(
                f"{path}: header must be 'x1,...,xD,f', got {','.join(header)!r}"
            )
        values = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue
            if len(cells) != dim + 1:
                raise ColumnCountError(lineno, dim + 1, len(cells))
            values.append([_parse_cell(c.strip(), lineno, name) for c, name in zip(cells, header)])
    if not values:
        raise DatasetError(f"{path}: no data rows")
    arr = np.array(values, dtype=np.float64)
    return Dataset(points=arr[:, :dim], targets=arr[:, dim])


def save_dataset(d: Dataset, path, *, raw: bool = True) -> None:
    """Write ``d`` as CSV with 17 significant digits (exact round trip)."""
    pts = d.raw_points() if raw else d.points
    header = [f"x{i + 1}" for i in range(d.dim)] + ["f"]
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p, t in zip(pts.tolist(), d.targets.tolist()):
            w.writerow([format(v, ".17g") for v in p] + [format(t, ".17g")])
    os.replace(tmp, path)


def normalize_features(d: Dataset, *, center: bool = False) -> Dataset:
    """Scale every coordinate column to unit sample standard deviation.

    Columns are not shifted unless ``center=True``.  The divisors are
    folded into ``feature_std`` so the raw coordinates stay recoverable.
    """
    if d.n < 2:
        raise DatasetError("need at least two rows to compute a standard deviation")
    std = d.points.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(std > 0.0))
    if bad.size:
        raise DatasetError(f"column x{bad[0] + 1} has zero standard deviation")
    mean = d.points.mean(axis=0) if center else np.zeros(d.dim)
    return apply_normalization(d, std, mean)


def apply_normalization(d: Dataset, std, mean=None) -> Dataset:
    """Map ``d.points`` to ``(points - mean) / std`` using externally computed statistics."""
    std = np.asarray(std, dtype=np.float64)
    mean = np.zeros(d.dim) if mean is None else np.asarray(mean, dtype=np.float64)
    if std.shape != (d.dim,) or mean.shape != (d.dim,):
        raise DatasetError("normalization statistics do not match dataset dimension")
    pts = (d.points - mean) / std
    return Dataset(
        points=pts,
        targets=d.targets,
        feature_std=d.feature_std * std,
        feature_mean=d.feature_mean + mean * d.feature_std,
        normalized=True,
    )


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < spec.n_train < n:
        raise ValueError(f"n_train must satisfy 0 < n_train < {n}, got {spec.n_train}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[: spec.n_train]), np.sort(perm[spec.n_train:])


def split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded partition into ``n_train`` training rows and the full complement as test."""
    train_idx, test_idx = split_indices(d.n, spec)
    return d.subset(train_idx), d.subset(test_idx)


def _additive_sine(x):
    return np.sin(np.pi * x).sum(axis=1)


def _gaussian_wells(x):
    dim = x.shape[1]
    prod = np.ones(x.shape[0])
    for sign in (1.0, -1.0):
        c = np.full(dim, 0.5 * sign)
        r2 = ((x - c) ** 2).sum(axis=1)
        prod *= 1.0 - np.exp(-r2 / (2.0 * WELL_WIDTH**2))
    return -WELL_DEPTH * (1.0 - prod)


def _rosenbrock_like(x):
    if x.shape[1] == 1:
        return (1.0 - x[:, 0]) ** 2
    a, b = x[:, :-1], x[:, 1:]
    return ((1.0 - a) ** 2 + 100.0 * (b - a**2) ** 2).sum(axis=1)


SYNTH_FUNCTIONS = {
    "additive_sine": _additive_sine,
    "gaussian_wells": _gaussian_wells,
    "rosenbrock_like": _rosenbrock_like,
}


def synth_function(name: str, dim: int, n: int, seed: int) -> Dataset:
    """Seeded synthetic dataset; see the module docstring for the closed forms."""
    try:
        func = SYNTH_FUNCTIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown synthetic function {name!r} (known: {', '.join(SYNTH_FUNCTIONS)})"
        ) from None
    if dim < 1 or n < 1:
        raise ValueError(f"dim and n must be >= 1, got dim={dim}, n={n}")
    x = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, dim))
    return Dataset(points=x, targets=func(x))


def _pair(pred, actual):
    a = np.asarray(pred, dtype=np.float64).ravel()
    b = np.asarray(actual, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def rmse(pred, actual) -> float:
    a, b = _pair(pred, actual)
    if a.size < 1:
        raise ValueError("rmse of empty vectors")
    r = a - b
    return float(np.sqrt(np.mean(r * r)))


def pearson(a, b) -> float:
    """Sample Pearson correlation coefficient."""
    x, y = _pair(a, b)
    if x.size < 2:
        raise ValueError("pearson needs at least two samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if not (sxx > 0.0 and syy > 0.0):
        raise ValueError("correlation is undefined for a zero-variance input")
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))

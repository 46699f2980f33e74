"""Pure-numpy covariance assembly, used when the compiled core is unavailable."""

import numpy as np


def _squared_distances(rows, cols):
    # per-dimension accumulation; keeps k(x, x') == k(x', x) bit-exact
    acc = np.zeros((rows.shape[0], cols.shape[0]))
    for k in range(rows.shape[1]):
        d = rows[:, k, None] - cols[None, :, k]
        d *= d
        acc += d
    return acc


def cross_covariance(family, scale, sigma2, rows, cols, num_threads=1):
    r2 = _squared_distances(rows, cols)
    np.maximum(r2, 0.0, out=r2)
    if family == 0:
        r2 *= scale
        np.negative(r2, out=r2)
        np.exp(r2, out=r2)
        r2 *= sigma2
        return r2
    t = np.sqrt(r2, out=r2)
    t *= scale
    e = np.exp(-t)
    if family == 1:
        e *= sigma2
        return e
    if family == 2:
        return sigma2 * (1.0 + t) * e
    return sigma2 * (1.0 + t + t * t / 3.0) * e

"""Compiled vs pure-Python kernel assembly, plus an end-to-end rectangular fit.

    python benchmarks/bench_kernels.py [--n 2000] [--m 1000] [--dim 15] [--repeat 3]
"""

import argparse
import os
import time

import numpy as np

from rectgpr import kernel
from rectgpr.gpr import fit_rect, select_basis_centers
from rectgpr.kernel import KernelFamily, KernelSpec, cross_covariance


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--m", type=int, default=1000)
    ap.add_argument("--dim", type=int, default=15)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.standard_normal((args.n, args.dim))
    f = np.sin(X).sum(axis=1)
    idx = select_basis_centers(args.n, args.m, 1)
    C = X[idx]
    backends = ["python"] + (["cython"] if kernel.BACKEND == "cython" else [])
    print(f"N={args.n} M={args.m} D={args.dim} default backend={kernel.BACKEND} "
          f"threads={os.environ.get('RECTGPR_KERNEL_THREADS', '1')}")
    if "cython" not in backends:
        print("compiled extension not available; only the numpy path is timed")

    print(f"{'kernel':<10}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  max|diff|")
    for family in KernelFamily:
        spec = KernelSpec(family=family, l=1.0)
        t = {b: best_of(lambda b=b: cross_covariance(spec, X, C, backend=b), args.repeat)
             for b in backends}
        line = f"{family.value:<10}" + "".join(f"{t[b]:>11.4f}s" for b in backends)
        if "cython" in t:
            diff = np.max(np.abs(cross_covariance(spec, X, C, backend="python")
                                 - cross_covariance(spec, X, C, backend="cython")))
            line += f"{t['python'] / t['cython']:>9.2f}x  {diff:.1e}"
        print(line)

    spec = KernelSpec(l=1.0)
    t_fit = best_of(lambda: fit_rect(X, f, idx, spec), args.repeat)
    t_b = best_of(lambda: cross_covariance(spec, X, C), args.repeat)
    print(f"fit_rect end to end: {t_fit:.3f}s (kernel assembly {t_b:.3f}s, rest is the SVD)")


if __name__ == "__main__":
    main()

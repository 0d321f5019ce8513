"""Compare the numba and numpy kernel backends on representative workloads.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from omarray._kernels import numba_kernels, numpy_kernels
from omarray.superlattice import LatticeConfig


def workloads():
    rng = np.random.default_rng(0)
    x = np.arange(-5000, 5001) * 2 * np.pi * 50.0
    centers = rng.uniform(-2e6, 2e6, 16)
    hwhm = np.full(16, 2 * np.pi * 600.0)
    heights = rng.uniform(0.5, 5, 16)
    xs = np.ascontiguousarray(np.arange(-120, 121, dtype=float))
    params = np.array([0.1] + [3.0, -10.0, 24.0, 1.5, 15.0, 24.0])
    cfg = LatticeConfig.default()
    step = min(cfg.wavelength_a, cfg.wavelength_b) / 50
    grid = np.arange(0.0, 19.2e-6, step)
    args = (cfg.k_a, cfg.k_b, cfg.depth_a, cfg.depth_b)
    slope = numpy_kernels.potential_slope(grid, *args)
    i = np.flatnonzero((slope[:-1] < 0) & (slope[1:] > 0))
    lo, hi = np.ascontiguousarray(grid[i]), np.ascontiguousarray(grid[i + 1])
    return {
        "lorentzian_sum (10001 bins x 16 lines)": lambda k: k.lorentzian_sum(x, centers, hwhm, heights),
        "lorentzian_model_jac (241 bins x 2 lines)": lambda k: k.lorentzian_model_jac(xs, params),
        "potential_slope (1 period grid)": lambda k: k.potential_slope(grid, *args),
        "bisect_minima (1 period)": lambda k: k.bisect_minima(lo, hi, *args, 1e-11),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if numba_kernels is None:
        print("numba not importable; only the numpy backend is available")
    print(f"{'workload':45s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speedup':>8s}")
    for name, fn in workloads().items():
        t_np = min(timeit.repeat(lambda: fn(numpy_kernels), number=args.repeat, repeat=3)) / args.repeat
        if numba_kernels is None:
            print(f"{name:45s} {t_np * 1e6:12.1f} {'-':>12s} {'-':>8s}")
            continue
        fn(numba_kernels)  # compile outside the timing
        t_nb = min(timeit.repeat(lambda: fn(numba_kernels), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:45s} {t_np * 1e6:12.1f} {t_nb * 1e6:12.1f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()

"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--size N] [--repeats R]
"""

import argparse
import time

import numpy as np

from smoothdef import _kernels_py as python_backend

try:
    from smoothdef import _kernels as cython_backend
except ImportError:
    cython_backend = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=64, help="square image side")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n = args.size
    plane = np.ascontiguousarray(rng.uniform(size=(n, n)))
    pad2 = np.pad(plane, 2, mode="edge")
    p, s = 2, 5
    nlm_pad = np.pad(plane, s + p, mode="edge")
    patch_kernel = np.full((2 * p + 1, 2 * p + 1), 1.0 / (2 * p + 1) ** 2)

    cases = {
        "median 5x5": lambda k: k.median_filter(pad2, 5),
        "bilateral d=5": lambda k: k.bilateral_filter(pad2, 5, 2.0, 0.1),
        "nlm p=2 s=5": lambda k: k.nlm_filter(nlm_pad, n, n, p, s, 0.1, patch_kernel),
        "diffusion step": lambda k: k.diffusion_step(plane, 0.1, 0.25, True),
    }

    print(f"image {n}x{n}, best of {args.repeats} runs")
    header = f"{'kernel':<16} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, call in cases.items():
        t_py = timeit(lambda: call(python_backend), args.repeats) * 1e3
        if cython_backend is None:
            print(f"{name:<16} {t_py:>12.2f} {'n/a':>12} {'n/a':>8}")
            continue
        a = call(python_backend)
        b = call(cython_backend)
        assert np.abs(np.asarray(a) - np.asarray(b)).max() <= 1e-12, name
        t_cy = timeit(lambda: call(cython_backend), args.repeats) * 1e3
        print(f"{name:<16} {t_py:>12.2f} {t_cy:>12.2f} {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()

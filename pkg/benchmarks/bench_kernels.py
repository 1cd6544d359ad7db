"""Timing comparison of the numba-jitted kernels against the pure-numpy
fallbacks.

Run as: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from kmgan import kernels


def best_of(fn, args, repeats):
    fn(*args)  # warm-up (triggers JIT compilation on the numba side)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if kernels.BACKEND != "numba":
        raise SystemExit(
            "numba backend is not active; run without KMGAN_BACKEND=numpy to benchmark"
        )

    rng = np.random.default_rng(0)
    cases = [
        (
            "nearest_centers n=10000 d=100 k=10",
            kernels._nearest_centers_nb,
            kernels._nearest_centers_np,
            (rng.normal(size=(10_000, 100)), rng.normal(size=(10, 100))),
        ),
        (
            "pairwise_l1_intra n=256 d=64",
            kernels._pairwise_l1_intra_nb,
            kernels._pairwise_l1_intra_np,
            (rng.normal(size=(256, 64)),),
        ),
        (
            "pairwise_l1_inter n=m=256 d=64",
            kernels._pairwise_l1_inter_nb,
            kernels._pairwise_l1_inter_np,
            (rng.normal(size=(256, 64)), rng.normal(size=(256, 64))),
        ),
    ]

    print(f"{'kernel':40s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, fn_nb, fn_np, data in cases:
        t_nb = best_of(fn_nb, data, args.repeats)
        t_np = best_of(fn_np, data, args.repeats)
        print(f"{name:40s} {t_nb * 1e3:9.2f}ms {t_np * 1e3:9.2f}ms {t_np / t_nb:7.2f}x")


if __name__ == "__main__":
    main()

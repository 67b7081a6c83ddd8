"""Benchmark the numba and numpy builds of the hot kernels against each other.

Run:  python benchmarks/bench_accel.py  [--repeats 5]

Both builds are always imported directly from mtkl._accel, so the
MTKL_DISABLE_NUMBA flag does not matter here (it only selects which build the
package aliases use at runtime).
"""

import argparse
import time

import numpy as np

from mtkl import _accel


def time_call(fn, args, repeats):
    fn(*args)  # warm-up (includes JIT compilation for the numba build)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def workloads():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (256, 8))
    Z = rng.uniform(-1, 1, (20_000, 8))
    Xs = np.ascontiguousarray(X[:32, :2])
    M = np.diag(rng.uniform(0.3, 3.0, 8))
    K = _accel.implementations("rbf_gram")["numpy"](X, 0.8)
    y = np.where(rng.random(256) < 0.5, 1.0, -1.0)
    V = rng.uniform(-1, 1, (512, 64))

    counts = np.array([7, 7, 7], dtype=np.int64)
    masks = rng.integers(0, 2**48, size=(21, 1)).astype(np.uint64)
    valid = np.array([(1 << 48) - 1], dtype=np.uint64)

    yield "rbf_gram (256x8)", "rbf_gram", (X, 0.8)
    yield "rbf_cross (32x20k)", "rbf_cross", (Xs, np.ascontiguousarray(Z[:, :2]), 0.8)
    yield "poly_gram (256x8)", "poly_gram", (X, 1.0, 0.5, 3)
    yield "metric_gram (256x8)", "metric_gram", (X, M)
    yield "hinge_pgd (m=256)", "hinge_pgd", (K, y, 0.1, y / 256.0, 2000, 1e-9, 1.0)
    yield "chebyshev_pdist (512x64)", "chebyshev_pdist", (V,)
    yield "shatter_scan (7^3 combos)", "shatter_scan", (masks, counts, valid, 10**6)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"numba available: {_accel.NUMBA_ENABLED}")
    header = f"{'workload':<28} {'numpy':>10} {'numba':>10} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for label, name, call_args in workloads():
        impls = _accel.implementations(name)
        t_np = time_call(impls["numpy"], call_args, args.repeats)
        if impls["numba"] is None:
            print(f"{label:<28} {t_np * 1e3:>8.2f}ms {'n/a':>10} {'':>9}")
            continue
        t_nb = time_call(impls["numba"], call_args, args.repeats)
        print(f"{label:<28} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
              f"{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Benchmark the jitted kernels against their pure-numpy fallbacks.

The jitted paths early-exit per trial column; the numpy paths scan whole
arrays.  Representative sizes follow the estimator workloads (event masks
over sample batches, all-pairs bound scans, greedy covers).  With
MEMBRANE_NO_NUMBA=1 the selected path is the numpy one and the speedups
print near 1x.

Usage: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from membrane import kernels


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm up (includes jit compilation)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def row(name, selected, fallback, *args):
    t_sel = timeit(selected, *args)
    t_np = timeit(fallback, *args)
    print(f"{name:<28} selected {t_sel * 1e3:8.2f} ms   numpy {t_np * 1e3:8.2f} ms"
          f"   speedup {t_np / t_sel:5.1f}x")


def main():
    rng = np.random.default_rng(0)
    print(f"numba active: {kernels.USE_NUMBA}")

    fields = rng.standard_normal((4225, 2048)) + 0.5
    row("positivity_hits 4225x2048", kernels.positivity_hits,
        kernels._positivity_hits_numpy, fields)

    bounds = rng.uniform(0.5, 3.0, 4225)
    row("smallness_hits 4225x2048", kernels.smallness_hits,
        kernels._smallness_hits_numpy, fields, bounds)

    m = 2000
    sym = rng.standard_normal((m, m))
    greens = (sym + sym.T) / 2
    coords = rng.integers(-16, 17, size=(m, 2)).astype(np.int64)
    depths = rng.uniform(1.0, 17.0, m)
    row(f"pair_bound_max {m}x{m}", kernels.pair_bound_max,
        kernels._pair_bound_max_numpy, greens, coords, depths, 2)

    pts = rng.uniform(0, 20, size=(400, 2))
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    row("greedy_cover_count 400 pts", kernels.greedy_cover_count,
        kernels._greedy_cover_count_numpy, dist, 1.5)


if __name__ == "__main__":
    main()

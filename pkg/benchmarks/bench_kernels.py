"""Timing comparison of the compiled kernels against the pure-numpy fallback.

Runs each hot kernel through both implementations in-process (the compiled
path via the public dispatch, the fallback via the reference functions) and
prints a small table.  Run with ``python3 benchmarks/bench_kernels.py``; set
``BERNFLOW_NO_NUMBA=1`` to confirm the dispatch itself switches paths.
"""

import time

import numpy as np

from bernflow import _kernels
from bernflow._kernels import (_basis_matrix_np, _solve_monotone_batch_np,
                               _solve_monotone_rows_np)


def timeit(fn, *args, repeat=5):
    fn(*args)  # warmup (includes JIT compilation for the compiled path)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    print(f"active path: {'numba' if _kernels.USE_NUMBA else 'numpy'}")
    print(f"{'kernel':<28}{'case':<22}{'active':>12}{'numpy ref':>12}{'speedup':>9}")

    for d, n in ((10, 10_000), (30, 10_000), (30, 100_000)):
        u = rng.random(n)
        a = timeit(_kernels.basis_matrix, u, d)
        b = timeit(_basis_matrix_np, u, d)
        print(f"{'basis_matrix':<28}{f'd={d} n={n}':<22}{a:>12.5f}{b:>12.5f}"
              f"{b / a:>9.2f}")

    for d, n in ((10, 5_000), (30, 5_000)):
        raw = rng.random(d) + 0.05
        dg = d * raw / raw.sum()
        g = np.concatenate([[0.0], np.cumsum(dg) / d])
        z = rng.random(n)
        a = timeit(_kernels.solve_monotone_batch, g, dg, z)
        b = timeit(_solve_monotone_batch_np, g, dg, z, 1e-6, 1e-10)
        print(f"{'solve_monotone_batch':<28}{f'd={d} n={n}':<22}{a:>12.5f}"
              f"{b:>12.5f}{b / a:>9.2f}")

    for d, n in ((10, 2_000), (30, 2_000)):
        raw = rng.random((n, d)) + 0.05
        dg = d * raw / raw.sum(axis=1, keepdims=True)
        g = np.concatenate([np.zeros((n, 1)), np.cumsum(dg, axis=1) / d], axis=1)
        z = rng.random(n)
        a = timeit(_kernels.solve_monotone_rows, g, dg, z)
        b = timeit(_solve_monotone_rows_np, g, dg, z, 1e-6, 1e-10)
        print(f"{'solve_monotone_rows':<28}{f'd={d} n={n}':<22}{a:>12.5f}"
              f"{b:>12.5f}{b / a:>9.2f}")


if __name__ == "__main__":
    main()

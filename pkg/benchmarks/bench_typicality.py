"""Benchmark the joint-type counting kernel: numba @njit vs pure numpy.

Reproduces the simulator's hot call pattern (one codebook-sized typicality
mask per trial) at several codebook sizes and prints a timing table. Run:

    python3 benchmarks/bench_typicality.py
"""

import time

import numpy as np

from cascade_rd import _kernels


def workload(rng, n_codewords, n, n_symbols):
    ids = rng.integers(0, n_symbols, size=(n_codewords, n)).astype(np.int64)
    p = rng.dirichlet(np.ones(n_symbols))
    lo = n * p * 0.6
    hi = n * p * 1.4
    return ids, lo, hi


def time_fn(fn, ids, n_symbols, lo, hi, reps):
    fn(ids, n_symbols, lo, hi)  # warm up (jit compile / cache touch)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(ids, n_symbols, lo, hi)
    return (time.perf_counter() - t0) / reps


def main():
    rng = np.random.default_rng(0)
    backends = [("numpy", _kernels.typical_mask_numpy)]
    if getattr(_kernels, "USE_NUMBA", False):
        backends.append(("numba", _kernels.typical_mask_numba))
    else:
        print("numba path disabled (CASCADE_RD_NO_NUMBA set or numba missing)")

    print(f"{'codewords':>10} {'n':>4} {'symbols':>8} "
          + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for n_codewords, n, n_symbols in (
        (256, 12, 8), (2048, 16, 12), (8192, 20, 12), (32768, 20, 16),
    ):
        ids, lo, hi = workload(rng, n_codewords, n, n_symbols)
        reps = max(3, 2_000_000 // (n_codewords * n))
        times = []
        masks = []
        for _, fn in backends:
            times.append(time_fn(fn, ids, n_symbols, lo, hi, reps))
            masks.append(fn(ids, n_symbols, lo, hi))
        for m in masks[1:]:
            assert np.array_equal(m, masks[0]), "backends disagree"
        speed = times[0] / times[-1] if len(times) > 1 else float("nan")
        print(f"{n_codewords:>10} {n:>4} {n_symbols:>8} "
              + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
              + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()

"""Timing comparison of the jitted kernels against the pure-python fallback.

Run as: python3 benchmarks/bench_kernels.py
The fallback path is what CFDLG_NO_NUMBA=1 selects at import time; with numba
available the same functions are compared through their .py_func handle, so
both paths run in one process on identical inputs.
"""
import time

import numpy as np

from cfdlg import kernels


def bench(label, fn_fast, fn_ref, args, repeat=5):
    fn_fast(*args)          # warm-up (jit compile)
    best_fast = min(_timed(fn_fast, args) for _ in range(repeat))
    best_ref = min(_timed(fn_ref, args) for _ in range(repeat))
    print(f"{label:24s} jit {best_fast * 1e3:9.3f} ms   "
          f"python {best_ref * 1e3:9.3f} ms   x{best_ref / best_fast:6.1f}")


def _timed(fn, args):
    t0 = time.perf_counter()
    fn(*args)
    return time.perf_counter() - t0


def main():
    if not kernels.USE_NUMBA:
        print("numba disabled (CFDLG_NO_NUMBA set or not installed); "
              "nothing to compare")
        return
    rng = np.random.default_rng(0)

    x = rng.standard_normal((600, 64))
    xn = x / np.linalg.norm(x, axis=1, keepdims=True)
    labels = rng.integers(0, 10, size=600)
    bench("cos_pair_stats", kernels.cos_pair_stats,
          kernels.cos_pair_stats.py_func, (xn, labels))

    ii = rng.integers(0, 600, size=100_000)
    jj = rng.integers(0, 600, size=100_000)
    bench("cos_pair_stats_sampled", kernels.cos_pair_stats_sampled,
          kernels.cos_pair_stats_sampled.py_func, (xn, labels, ii, jj))

    n = 200_000
    args = (rng.standard_normal(n), rng.standard_normal(n),
            rng.standard_normal(n), rng.random(n), 3, 1e-3, 0.9, 0.999, 1e-8)
    bench("adam_update", kernels.adam_update, kernels.adam_update.py_func, args)

    xs = rng.standard_normal((25, 64))
    wx = rng.standard_normal((64, 256)) * 0.1
    wh = rng.standard_normal((64, 256)) * 0.1
    b = rng.standard_normal(256) * 0.1
    bench("lstm_seq_forward", kernels.lstm_seq_forward,
          kernels.lstm_seq_forward.py_func, (xs, wx, wh, b))


if __name__ == "__main__":
    main()

"""Compare the compiled kernels against the pure NumPy fallback.

Runs the two hot paths (bank search, harmonic painting) on identical
inputs with both backends, checks they agree, and prints timings.

    python3 benchmarks/bench_kernels.py [--rows 100000] [--dim 640]
"""

import argparse
import time

import numpy as np

from patchmem.kernels import pure

try:
    from patchmem.kernels import _native as native
except ImportError:
    native = None


def unit_rows(rng, n, d):
    m = rng.standard_normal((n, d))
    return (m / np.linalg.norm(m, axis=1, keepdims=True)).astype(np.float32)


def time_call(fn, *args, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def bench_search(rng, rows, dim, queries):
    bank = unit_rows(rng, rows, dim)
    q = unit_rows(rng, queries, dim)
    q, bank = pure.check_search_args(q, bank, 8192)
    results = {}
    t, (best_p, idx_p) = time_call(pure.bank_search, q, bank)
    results["pure"] = t
    if native is not None:
        t, (best_n, idx_n) = time_call(native.bank_search, q, bank)
        results["native"] = t
        assert np.array_equal(best_p, best_n), "backends disagree on scores"
        assert np.array_equal(idx_p, idx_n), "backends disagree on indices"
    return results


def bench_paint(rng, n_windows, grid_side):
    boxes = np.empty((n_windows, 4), dtype=np.int64)
    boxes[:, 0] = rng.integers(0, grid_side - 3, n_windows)
    boxes[:, 1] = rng.integers(0, grid_side - 3, n_windows)
    boxes[:, 2] = rng.integers(1, 4, n_windows)
    boxes[:, 3] = rng.integers(1, 4, n_windows)
    scores = rng.random(n_windows)
    results = {}
    t, (rp, cp) = time_call(pure.paint_harmonic, boxes, scores,
                            grid_side, grid_side, 1e-6)
    results["pure"] = t
    if native is not None:
        t, (rn, cn) = time_call(native.paint_harmonic, boxes, scores,
                                grid_side, grid_side, 1e-6)
        results["native"] = t
        assert np.allclose(rp, rn) and np.array_equal(cp, cn)
    return results


def report(label, results):
    pure_t = results["pure"]
    if "native" in results:
        ratio = pure_t / results["native"]
        print(f"{label:<44} pure {pure_t * 1e3:9.2f} ms   "
              f"native {results['native'] * 1e3:9.2f} ms   "
              f"speedup {ratio:5.2f}x")
    else:
        print(f"{label:<44} pure {pure_t * 1e3:9.2f} ms   "
              f"native unavailable")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=100_000)
    ap.add_argument("--dim", type=int, default=640)
    ap.add_argument("--queries", type=int, default=1_000)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"bank search: {args.queries} queries vs "
          f"{args.rows} x {args.dim} bank")
    report("  full workload", bench_search(rng, args.rows, args.dim,
                                           args.queries))
    report("  small bank (2k rows)",
           bench_search(rng, 2_000, args.dim, args.queries))
    print("harmonic painting")
    report("  10k windows on a 64x64 grid", bench_paint(rng, 10_000, 64))
    report("  500 windows on a 15x15 grid", bench_paint(rng, 500, 15))


if __name__ == "__main__":
    main()

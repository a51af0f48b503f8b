"""Timing comparison of the compiled kernels against the pure fallback.

Usage: python3 benchmarks/bench_kernels.py [--total N] [--dim D] [--repeats R]

Each kernel is timed best-of-R on the same inputs for both backends and
the outputs are cross-checked byte for byte before any number is printed.
"""

import argparse
import time

import numpy as np

from gpart import _kernels_py

try:
    from gpart import _kernels
except ImportError:
    _kernels = None


def best_of(repeats, fn, *args):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--total", type=int, default=1_000_000)
    ap.add_argument("--dim", type=int, default=4096)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    total, dim = args.total, args.dim
    rng = np.random.default_rng(0)
    values = rng.normal(size=total)
    theta = rng.normal(size=dim)
    assignment = rng.integers(0, dim, size=total).astype(np.uint32)

    cases = [
        ("splitmix64_stream", (42, total)),
        ("shuffled_indices", (42, total)),
        ("gather", (theta, assignment)),
        ("group_sums", (values, assignment, dim)),
    ]

    if _kernels is None:
        print("compiled backend not importable; timing pure fallback only")
    print(f"total={total} dim={dim} best of {args.repeats}")
    print(f"{'kernel':<20} {'pure (ms)':>12} {'compiled (ms)':>14} {'speedup':>9}")
    for name, call_args in cases:
        t_pure, ref = best_of(args.repeats, getattr(_kernels_py, name), *call_args)
        if _kernels is None:
            print(f"{name:<20} {t_pure * 1e3:>12.3f} {'-':>14} {'-':>9}")
            continue
        t_fast, out = best_of(args.repeats, getattr(_kernels, name), *call_args)
        if out.tobytes() != ref.tobytes():
            raise SystemExit(f"backend mismatch in {name}")
        print(f"{name:<20} {t_pure * 1e3:>12.3f} {t_fast * 1e3:>14.3f} "
              f"{t_pure / t_fast:>8.1f}x")


if __name__ == "__main__":
    main()

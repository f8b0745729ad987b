"""Compiled vs numpy kernels on bitmap and join workloads.

Run ``python3 benchmarks/bench_kernels.py [--repeats N]``. Both backends
are imported directly, so no environment variable is needed.
"""

import argparse
import time

import numpy as np

from qsuperopt import kernels


def _time(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn(*args)
        best = min(best, time.perf_counter_ns() - t0)
    return best / 1e3


def cases(rng):
    a = np.unique(rng.integers(0, 65536, 3000)).astype(np.uint16)
    b = np.unique(rng.integers(0, 65536, 3000)).astype(np.uint16)
    x = rng.integers(0, 2 ** 63, 1024, dtype=np.uint64)
    y = rng.integers(0, 2 ** 63, 1024, dtype=np.uint64)
    z = rng.integers(0, 2 ** 63, 1024, dtype=np.uint64)
    lk = rng.integers(0, 50, 2000).astype(np.int64)
    rk = rng.integers(0, 50, 2000).astype(np.int64)
    return [
        ("array_and_count", (a, b)),
        ("array_and", (a, b)),
        ("bitset_and_count", (x, y)),
        ("bitset_and3_count", (x, y, z)),
        ("array_bitset_count", (a, x)),
        ("array_bitset_and", (a, x)),
        ("nested_loop_pairs", (lk, rk)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if kernels.compiled_impl is None:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22}{'numpy (us)':>14}{'compiled (us)':>16}{'speedup':>10}")
    for name, a in cases(rng):
        py = _time(getattr(kernels.python_impl, name), a, args.repeats)
        if kernels.compiled_impl is None:
            print(f"{name:<22}{py:>14.1f}{'-':>16}{'-':>10}")
            continue
        got_py = getattr(kernels.python_impl, name)(*a)
        got_c = getattr(kernels.compiled_impl, name)(*a)
        same = (all(np.array_equal(p, c) for p, c in zip(got_py, got_c)) if isinstance(got_py, tuple)
                else np.array_equal(got_py, got_c))
        if not same:
            raise SystemExit(f"{name}: backends disagree")
        c = _time(getattr(kernels.compiled_impl, name), a, args.repeats)
        print(f"{name:<22}{py:>14.1f}{c:>16.1f}{py / c:>9.1f}x")


if __name__ == "__main__":
    main()

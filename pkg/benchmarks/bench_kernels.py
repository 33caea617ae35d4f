"""Compare the compiled kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--sizes 500,1000,2000] [--dim 50]
"""
import argparse
import time

import numpy as np

from kgalign import _kernels
from kgalign._kernels import fallback


def _time(fn, *args, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="500,1000,2000")
    parser.add_argument("--dim", type=int, default=50)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if _kernels.BACKEND != "cython":
        print("compiled extension unavailable; benchmarking fallback only")
        impls = [("fallback", fallback)]
    else:
        from kgalign._kernels import _fast
        impls = [("cython", _fast), ("fallback", fallback)]

    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'size':>8}{'backend':>10}{'seconds':>12}{'speedup':>9}")
    for n in sizes:
        a = np.ascontiguousarray(rng.standard_normal((n, args.dim)))
        b = np.ascontiguousarray(rng.standard_normal((n, args.dim)))
        times = {}
        outs = {}
        for name, impl in impls:
            times[name], outs[name] = _time(impl.l1_cross, a, b)
        base = times["fallback"]
        for name, _ in impls:
            speedup = base / times[name]
            print(f"{'l1_cross':<14}{n:>8}{name:>10}{times[name]:>12.4f}{speedup:>8.1f}x")
        if len(outs) == 2:
            assert np.allclose(outs["cython"], outs["fallback"], atol=1e-9)

        vals = np.ascontiguousarray(rng.standard_normal((20 * n, args.dim)))
        seg = np.ascontiguousarray(rng.integers(0, n, size=20 * n), dtype=np.int64)
        times = {}
        outs = {}
        for name, impl in impls:
            times[name], outs[name] = _time(impl.segment_sum, vals, seg, n)
        base = times["fallback"]
        for name, _ in impls:
            speedup = base / times[name]
            print(f"{'segment_sum':<14}{20 * n:>8}{name:>10}{times[name]:>12.4f}{speedup:>8.1f}x")
        if len(outs) == 2:
            assert np.allclose(outs["cython"], outs["fallback"], atol=1e-9)


if __name__ == "__main__":
    main()

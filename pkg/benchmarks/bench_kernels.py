"""Compiled vs numpy kernels on the all-pairs checks.

    python3 benchmarks/bench_kernels.py [--sizes 64,128,256,512] [--dim 256] [--repeat 5]
"""
import argparse
import math
import timeit

import numpy as np

from monofam import _kernels_py as py

try:
    from monofam import _kernels as cy
except ImportError:
    cy = None


def cases(n, d, rng):
    U = rng.standard_normal((n, d))
    W = np.where(rng.random((n, d)) > 0.1, rng.uniform(0.5, 1.5, (n, d)), 0.0)
    G = np.cumsum(rng.uniform(0, 1, n))
    N = rng.uniform(0, 1, n)
    return {
        "weighted_lq_rows q=2": lambda m: m.weighted_lq_rows(U, W, 2.0),
        "pair_gradient_violation q=2": lambda m: m.pair_gradient_violation(U, W, 2.0, G),
        "pair_gradient_violation q=3": lambda m: m.pair_gradient_violation(U, W, 3.0, G),
        "pair_gradient_violation q=inf": lambda m: m.pair_gradient_violation(U, W, math.inf, G),
        "scalar_pair_violation": lambda m: m.scalar_pair_violation(N, G),
    }


def best(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="64,128,256,512")
    ap.add_argument("--dim", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        print("compiled extension not built; only the numpy timings are shown")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'n':>5s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, call in cases(n, args.dim, rng).items():
            tp = best(lambda: call(py), args.repeat) * 1e3
            if cy is None:
                print(f"{name:32s} {n:5d} {tp:10.3f} {'-':>10s} {'-':>8s}")
                continue
            tc = best(lambda: call(cy), args.repeat) * 1e3
            print(f"{name:32s} {n:5d} {tp:10.3f} {tc:10.3f} {tp / tc:8.1f}")


if __name__ == "__main__":
    main()

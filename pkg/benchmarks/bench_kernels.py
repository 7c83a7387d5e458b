"""Time the per-shot kernels on both backends.

Usage::

    python3 benchmarks/bench_kernels.py [--shots 20000] [--chi 8] [--n 8] [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` wall time for the
numpy fallback and the compiled extension, their ratio, and the largest
absolute difference between the two outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from tnice import kernels


def _best(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(shots, chi, n, s=6, seed=0):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((chi, s, chi))
    left = rng.standard_normal((shots, chi))
    right = rng.standard_normal((shots, chi))
    k = rng.integers(0, s, size=shots).astype(np.int64)
    w = rng.random(shots)
    tensors = [rng.standard_normal((1 if i == 0 else chi, s, 1 if i == n - 1 else chi)) for i in range(n)]
    outcomes = rng.integers(0, s, size=(shots, n)).astype(np.int64)
    return {
        "left_step": lambda m: m.left_step(left, t, k),
        "right_step": lambda m: m.right_step(right, t, k),
        "moment_blocks": lambda m: m.moment_blocks(left, right, k, w, s),
        "chain_values": lambda m: m.chain_values(tensors, outcomes),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shots", type=int, default=20000)
    ap.add_argument("--chi", type=int, default=8)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    py = kernels.backend_module("python")
    try:
        cy = kernels.backend_module("cython")
    except ImportError:
        cy = None
        print("compiled extension not built; timing the numpy backend only")

    print(f"shots={args.shots} chi={args.chi} n={args.n} default backend={kernels.BACKEND}")
    print(f"{'kernel':<14} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8} {'max |diff|':>11}")
    for name, fn in cases(args.shots, args.chi, args.n).items():
        tp, outp = _best(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:<14} {1e3 * tp:12.2f}")
            continue
        tc_, outc = _best(lambda: fn(cy), args.repeat)
        diff = float(np.max(np.abs(np.asarray(outp) - np.asarray(outc))))
        print(f"{name:<14} {1e3 * tp:12.2f} {1e3 * tc_:12.2f} {tp / tc_:8.2f} {diff:11.2e}")


if __name__ == "__main__":
    main()

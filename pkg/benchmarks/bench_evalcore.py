#!/usr/bin/env python3
"""Benchmark the compiled tape kernel against the numpy fallback.

Usage: python benchmarks/bench_evalcore.py [npoints]
"""

import sys
import time

import numpy as np

from bgeo.evalcore import _pykernel, compile_tape
from bgeo.symexpr import Patch, parse_expr

try:
    from bgeo.evalcore import _ckernel
except ImportError:
    _ckernel = None

CASES = {
    "polynomial": "x^3*y - 2*x*y^2 + y^4/4 - x + 7/3",
    "rational": "(x^2 + y^2)/(1 + x^2*y^2) + 1/(x^2 + 1/2)",
    "transcendental": "sin(x)^2*cos(3*y) + exp(-x^2 - y^2)*log(2 + x^2)",
    "deep": "sin(cos(sin(cos(x*y) + x) - y) + exp(-abs(x)))",
}


def bench(kernel, tape, pts, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        kernel.evaluate(tape, pts)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    patch = Patch(("x", "y"), ((-2.0, 2.0), (-2.0, 2.0)))
    pts = np.random.default_rng(0).uniform(-2, 2, size=(n, 2))
    print(f"{n} points per case, best of 7 runs\n")
    print(f"{'case':<16} {'python':>10} {'cython':>10} {'speedup':>8}")
    for name, text in CASES.items():
        tape = compile_tape(parse_expr(text, patch), ("x", "y"))
        t_py = bench(_pykernel, tape, pts)
        if _ckernel is not None:
            t_cy = bench(_ckernel, tape, pts)
            print(f"{name:<16} {t_py*1e3:>8.2f}ms {t_cy*1e3:>8.2f}ms "
                  f"{t_py/t_cy:>7.1f}x")
        else:
            print(f"{name:<16} {t_py*1e3:>8.2f}ms {'n/a':>10} {'':>8}")
    if _ckernel is None:
        print("\ncompiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Compare the compiled and numpy kernels, and time a full propagator run.

Usage: python benchmarks/bench_kernels.py [--sizes 201 401 801] [--repeat 3]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ordex import _kernels_py

try:
    from ordex import _kernels as _kernels_c
except ImportError:  # pragma: no cover
    _kernels_c = None


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12}{'n':>6}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>9}{'max diff':>11}")
    for n in sizes:
        h = 1.0 / (n - 1)
        f = np.tril(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        g = np.tril(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        x = 0.5 * f
        cases = [
            ("compose", lambda k: k.compose(f, g, h), lambda r: r),
            ("resolvent", lambda k: k.resolvent_sweep(x, h, 1e100), lambda r: r[0]),
        ]
        for name, call, pick in cases:
            tp = _best(lambda: call(_kernels_py), repeat)
            if _kernels_c is None:
                print(f"{name:<12}{n:>6}{tp:>12.4f}{'n/a':>12}{'':>9}{'':>11}")
                continue
            tc = _best(lambda: call(_kernels_c), repeat)
            diff = np.max(np.abs(pick(call(_kernels_py)) - pick(call(_kernels_c))))
            print(f"{name:<12}{n:>6}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.2f}{diff:>11.2e}")


_END_TO_END = """
import time, numpy as np
from ordex import BACKEND
from ordex.grid import make_grid
from ordex.starlan import MatrixFn
from ordex.pathsum import ordered_exp_entry
A = MatrixFn.from_callable(lambda t: np.array([[0, 1], [t, 0]]), make_grid(0, 1, {n}))
t0 = time.perf_counter()
col = ordered_exp_entry(A, [1, 0], [1, 2], 2, oracle=False)
print(BACKEND, time.perf_counter() - t0)
"""


def bench_end_to_end(n):
    print(f"\nairy fixture, m=2, n={n} (fresh process per backend)")
    for backend in ("python", "cython"):
        env = dict(os.environ, ORDEX_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", _END_TO_END.format(n=n)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  requested {backend:<7} loaded {out[0]:<7} {float(out[1]):.3f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[201, 401, 801])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--e2e-n", type=int, default=401)
    args = ap.parse_args()
    bench_kernels(args.sizes, args.repeat)
    bench_end_to_end(args.e2e_n)


if __name__ == "__main__":
    main()

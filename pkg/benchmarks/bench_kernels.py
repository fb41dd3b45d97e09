"""Time the numba and numpy path kernels on the same noise.

    python benchmarks/bench_kernels.py [--n 32] [--paths 8192] [--repeat 5]

Prints best-of-repeat wall time per kernel and the speedup.  The first numba
call is excluded (compilation or cache load).
"""

import argparse
import time

import numpy as np

from pillowbound import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--paths", type=int, default=8192)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    n = args.n
    z = rng.standard_normal((args.paths, n, n))
    upper = np.full((n + 1, n + 1), 0.5)
    lower = -upper
    atoms = rng.normal(size=(n + 1, n + 1))

    cases = {
        "pillow_paths": lambda use: _kernels.pillow_paths(z, use_numba=use),
        "path_stats": lambda use: _kernels.path_stats(z, upper, lower, atoms, use_numba=use),
    }
    print(f"n={n} paths={args.paths} numba available={_kernels.HAVE_NUMBA}")
    for name, call in cases.items():
        slow = best_of(lambda: call(False), args.repeat)
        line = f"{name:>13}: numpy {slow * 1e3:8.1f} ms"
        if _kernels.HAVE_NUMBA:
            call(True)
            fast = best_of(lambda: call(True), args.repeat)
            line += f"  numba {fast * 1e3:8.1f} ms  speedup {slow / fast:5.1f}x"
        print(line)


if __name__ == "__main__":
    main()

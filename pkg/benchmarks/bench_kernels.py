"""Compare the compiled Monte Carlo kernel against the numpy fallback.

    python benchmarks/bench_kernels.py [--trials 20000] [--repeat 3]

Both backends consume the same pre-drawn uniforms, so the survival counts
must match exactly; the script fails loudly if they do not.
"""

import argparse
import sys
import time

import numpy as np

from ftpads import _kernels_py as fallback

try:
    from ftpads import _kernels as compiled
except ImportError:
    compiled = None

CASES = [
    # L, N, M, X, constrained, need
    (10, 20, 3, 4, True, 1),
    (20, 50, 7, 8, True, 4),
    (20, 50, 7, 8, False, 1),
    (100, 50, 21, 30, True, 11),
]


def best_of(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1

    print(f"{'L':>4} {'N':>4} {'M':>3} {'X':>4} {'constr':>6} {'numpy s':>9} {'cython s':>9} {'speedup':>8}")
    for L, N, M, X, constrained, need in CASES:
        rng = np.random.default_rng(0)
        u_place = rng.random((args.trials, N * M))
        u_crash = rng.random((args.trials, X))
        t_py, n_py = best_of(lambda: fallback.count_survivals(L, N, M, X, constrained, need, u_place, u_crash), args.repeat)
        t_c, n_c = best_of(lambda: compiled.count_survivals(L, N, M, X, constrained, need, u_place, u_crash), args.repeat)
        if n_py != n_c:
            raise SystemExit(f"backends disagree on {(L, N, M, X, constrained)}: {n_py} != {n_c}")
        print(f"{L:>4} {N:>4} {M:>3} {X:>4} {str(constrained):>6} {t_py:>9.4f} {t_c:>9.4f} {t_py / t_c:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Compare the compiled and pure-Python simulation kernels.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from lantest import _kernels_py

try:
    from lantest import _kernels
except ImportError:  # extension not built
    _kernels = None

CASES = {
    "ar1 null": (np.array([0.1]), 0.0, 0, 0.0, 0.0, 1.0, 0.0, 0),
    "ar1-arch ex2": (np.array([0.1]), 0.5, 0, 0.05, 0.0125, 1.0, 0.0, 1),
    "ar2 ex3": (np.array([0.2, 0.2]), 0.0, 0, 0.08, 0.08, 1.0, 0.0, 2),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    eps = np.random.default_rng(0).standard_normal(args.n)
    print(f"{'case':<14} {'python ms':>10} {'cython ms':>10} {'speedup':>8}  identical")
    for name, rest in CASES.items():
        py = min(timeit.repeat(lambda: _kernels_py.ar_recursion(eps, *rest),
                               number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{name:<14} {py * 1e3:10.2f} {'n/a':>10}")
            continue
        cy = min(timeit.repeat(lambda: _kernels.ar_recursion(eps, *rest),
                               number=1, repeat=args.repeat))
        same = np.array_equal(_kernels_py.ar_recursion(eps, *rest)[0],
                              _kernels.ar_recursion(eps, *rest)[0])
        print(f"{name:<14} {py * 1e3:10.2f} {cy * 1e3:10.3f} {py / cy:8.1f}  {same}")


if __name__ == "__main__":
    main()

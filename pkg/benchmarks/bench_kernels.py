"""Compare the compiled kernels with their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``.  Each kernel is timed on
inputs of the size used by the shape experiments (k shapes of n landmarks)
and by synchronisation of k homogeneous 4x4 blocks.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from transync import _kernels_py

try:
    from transync import _kernels_cy
except ImportError:
    _kernels_cy = None


def _best(fn, repeat: int) -> float:
    number, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def cases(k: int, n: int, d: int, rng: np.random.Generator):
    P = rng.standard_normal((k, n, d))
    present = (rng.random((k, n)) >= 0.35).astype(np.uint8)
    pairs = k * k
    X = np.repeat(P, k, axis=0)
    Y = np.tile(P, (k, 1, 1))
    mask = (np.repeat(present, k, axis=0) & np.tile(present, (k, 1))).astype(np.uint8)
    B = rng.standard_normal((k, k, d + 2, d + 2))
    return {
        f"pair_moments    p={pairs} n={n} d={d}": ("pair_moments", (X, Y, mask)),
        f"all_pair_moments k={k} n={n} d={d}": ("all_pair_moments", (P, present)),
        f"max_triple_residual k={k} m={d + 2}": ("max_triple_residual", (B,)),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=30)
    ap.add_argument("--n", type=int, default=98)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s}")
    for label, (name, inputs) in cases(args.k, args.n, args.d, rng).items():
        t_py = _best(lambda: getattr(_kernels_py, name)(*inputs), args.repeat)
        if _kernels_cy is None:
            print(f"{label:40s} {t_py * 1e3:12.3f} {'n/a':>12s} {'':>9s}")
            continue
        t_cy = _best(lambda: getattr(_kernels_cy, name)(*inputs), args.repeat)
        print(f"{label:40s} {t_py * 1e3:12.3f} {t_cy * 1e3:12.3f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()

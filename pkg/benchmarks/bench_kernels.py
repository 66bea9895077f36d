"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 128,512,1024]

Prints one row per (kernel, size) with the best-of-N wall time of each
backend and the speed-up.  Exits quietly with a note if the extension is
not built.
"""
import argparse
import timeit

import numpy as np

from nona import _pykernels

try:
    from nona import _ckernels
except ImportError:
    _ckernels = None


def cases(n, d, rng):
    A = rng.normal(size=(n, d))
    B = rng.normal(size=(n, d))
    D = _pykernels.pairwise_l2(A, B)
    G = rng.normal(size=D.shape)
    m = max(n * 20, 1000)
    dij, dik, R = rng.normal(size=m), rng.normal(size=m), rng.uniform(0.1, 1.0, m)
    return {
        "pairwise_l2": lambda k: k.pairwise_l2(A, B),
        "pairwise_l2_backward": lambda k: k.pairwise_l2_backward(A, B, D, G, 1e-12),
        "pairwise_l1": lambda k: k.pairwise_l1(A, B),
        "pairwise_l1_backward": lambda k: k.pairwise_l1_backward(A, B, G),
        "knn_indices(k=7)": lambda k: k.knn_indices(D, 7),
        "triplet_grid_argmin": lambda k: k.triplet_grid_argmin(dij, dik, R, 1e-3),
    }


def best_time(fn, impl, repeat):
    return min(timeit.repeat(lambda: fn(impl), number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", default="128,512,1024")
    parser.add_argument("--dim", type=int, default=25)
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; nothing to compare (pip install -e . --no-build-isolation)")
        return 0
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'n':>6}{'cython ms':>12}{'numpy ms':>12}{'speed-up':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, fn in cases(n, args.dim, rng).items():
            tc = best_time(fn, _ckernels, args.repeat)
            tp = best_time(fn, _pykernels, args.repeat)
            print(f"{name:<24}{n:>6}{tc * 1e3:>12.3f}{tp * 1e3:>12.3f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from ogslda import _fallback, morphgen

try:
    from ogslda import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    codes = rng.integers(0, 40, size=5000).astype(np.int64)
    filtered = rng.random((200, 50)), rng.random((200, 50))
    full = rng.random((60, 40 * 40)), rng.random((60, 40 * 40))
    return {
        "transition_counts n=40 len=5000": lambda m: m.transition_counts(codes, 40),
        "pairwise_l1 200x200 K=50": lambda m: m.pairwise_l1(*filtered),
        "pairwise_l1 60x60 N^2=1600": lambda m: m.pairwise_l1(*full),
    }


def bench_training(repeat):
    import importlib
    import os

    from ogslda import detector, kernels

    spec = morphgen.mwor_like_spec(variants_per_ratio=100, ratios=(2.0,))
    samples = morphgen.generate_samples(spec)
    rows = {}
    for name, forced in (("cython", False), ("python", True)):
        if forced:
            os.environ["OGSLDA_PURE_PYTHON"] = "1"
        else:
            os.environ.pop("OGSLDA_PURE_PYTHON", None)
        importlib.reload(kernels)
        if kernels.BACKEND != name:
            continue
        for prune in (True, False):
            t = min(timeit.repeat(lambda: detector.train(samples, prune=prune), number=1, repeat=repeat))
            rows[(name, prune)] = t
    os.environ.pop("OGSLDA_PURE_PYTHON", None)
    importlib.reload(kernels)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{label:36s} {t_py:10.2f} {'n/a':>10s}")
            continue
        assert fn(_kernels).tobytes() == fn(_fallback).tobytes()
        t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:36s} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:7.1f}x")

    print("\ntrain() on 100 worms + 20 benign")
    for (name, prune), t in sorted(bench_training(args.repeat).items()):
        print(f"  {name:7s} {'pruned' if prune else 'all edges':10s} {t * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()

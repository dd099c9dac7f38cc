"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from affgraph import _pykernels as py

try:
    from affgraph import _ckernels as ck
except ImportError:
    ck = None


def cases(rng):
    boxes_a = np.hstack([xy := rng.uniform(0, 100, (300, 2)), xy + rng.uniform(1, 30, (300, 2))])
    boxes_b = np.hstack([xy := rng.uniform(0, 100, (40, 2)), xy + rng.uniform(1, 30, (40, 2))])
    for n in (32, 128, 512):
        f = rng.standard_normal((n, 16))
        g = rng.standard_normal((n, n))
        t = (rng.random((n, n)) < 0.1).astype(np.float64)
        np.fill_diagonal(t, 0)
        coef = rng.standard_normal(n)
        wt = py.normalize_mass(g, t, False, False)[0]
        yield f"l2_affinity n={n}", "l2_affinity", (f,)
        yield f"l2_affinity_backward n={n}", "l2_affinity_backward", (f, g)
        yield f"normalize_mass matrix n={n}", "normalize_mass", (g, t, False, False)
        yield f"normalize_mass row n={n}", "normalize_mass", (g, t, True, False)
        yield f"mass_backward n={n}", "mass_backward", (wt, t, coef, False)
    yield "pairwise_iou 300x40", "pairwise_iou", (boxes_a, boxes_b)


def best_time(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'case':32s} {'python (us)':>12s} {'cython (us)':>12s} {'speedup':>8s}")
    for name, kernel, kargs in cases(rng):
        tp = best_time(getattr(py, kernel), kargs, args.repeat)
        if ck is None:
            print(f"{name:32s} {tp * 1e6:12.1f} {'n/a':>12s} {'':>8s}")
            continue
        tc = best_time(getattr(ck, kernel), kargs, args.repeat)
        print(f"{name:32s} {tp * 1e6:12.1f} {tc * 1e6:12.1f} {tp / tc:7.2f}x")


if __name__ == "__main__":
    main()

"""Compare the numba and numpy implementations of each hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Set DDA_DISABLE_NUMBA=1 to see how the rest of the package behaves without
numba; this script always times both variants side by side (the numba column
is meaningless when numba is not installed).
"""
import argparse
import timeit

import numpy as np

from dda import _accel, kernels


def cases(rng):
    v = rng.uniform(size=64 * 64 * 8)
    m = rng.integers(0, 2, v.size)
    grid = np.arange(256) / 255.0
    x = rng.uniform(size=(8, 8, 64, 64))
    w = rng.normal(size=(16, 8, 3, 3))
    b = np.zeros(16)
    dy = rng.normal(size=(8, 16, 64, 64))
    img = rng.uniform(size=(56, 56, 3))
    return {
        "class_sums": ((v, m),),
        "centered_squares": ((v, m, 0.4, 0.6),),
        "threshold_counts": ((v, m, grid),),
        "conv2d_forward": ((x, w, b),),
        "conv2d_backward": ((x, w, dy),),
        "resize_bilinear": ((img, 64, 64),),
    }


def best_time(fn, args, repeat):
    fn(*args)  # compile / warm up
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"active backend: {_accel.backend()}")
    print(f"{'kernel':18s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, (call,) in cases(rng).items():
        t_nb = best_time(getattr(kernels, f"{name}_numba"), call, args.repeat)
        t_np = best_time(getattr(kernels, f"{name}_numpy"), call, args.repeat)
        print(f"{name:18s} {t_nb * 1e3:10.2f} {t_np * 1e3:10.2f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()

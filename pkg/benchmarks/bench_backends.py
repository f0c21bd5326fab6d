"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_backends.py [--size 128] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from pldeblur import _fallback

try:
    from pldeblur import _kernels
except ImportError:
    _kernels = None


def cases(size):
    rng = np.random.default_rng(0)
    rate = rng.uniform(0, 40, (size, size))
    vt = rng.uniform(-0.5, 1.5, (size, size))
    y = rng.poisson(10, (size, size)).astype(float)
    img = rng.random((size, size))
    return {
        "poisson_sample": lambda m: m.poisson_sample(rate, 1),
        "poisson_prox": lambda m: m.poisson_prox(vt, y, 20.0, 50.0),
        "tv_denoise(50 it)": lambda m: m.tv_denoise(img, 0.05, 50, 0.0),
    }


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled kernels not built; only the fallback is timed")
    print(f"{'kernel':<20}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for name, fn in cases(args.size).items():
        t_py = best_time(lambda: fn(_fallback), args.repeat) * 1e3
        if _kernels is None:
            print(f"{name:<20}{t_py:>14.2f}{'-':>14}{'-':>10}")
            continue
        t_cy = best_time(lambda: fn(_kernels), args.repeat) * 1e3
        print(f"{name:<20}{t_py:>14.2f}{t_cy:>14.2f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()

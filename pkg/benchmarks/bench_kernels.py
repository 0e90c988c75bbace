"""Time the numba kernels against their numpy fallbacks.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``. The first
numba call is excluded from the timing so compilation is not counted.
"""
import argparse
import timeit

import numpy as np

from sigdrawdown.regression import CVConfig, fit_elastic_net
from sigdrawdown.signature import augment_batch, batch_jacobian, batch_signature


def cases():
    rng = np.random.default_rng(0)
    values = 1 + 0.01 * rng.standard_normal((2000, 20)).cumsum(axis=1)
    paths = augment_batch(values)
    X = rng.normal(size=(5000, 126))
    y = X @ rng.normal(size=126) + rng.normal(size=5000)
    cfg = CVConfig(tol=1e-10, max_iter=2000)
    return {
        "batch_signature (2000 paths, M=6)": lambda b: batch_signature(paths, 6, backend=b),
        "batch_jacobian (500 paths, M=4)": lambda b: batch_jacobian(paths[:500], 4, backend=b),
        "elastic net CD (5000 x 126)": lambda b: fit_elastic_net(X, y, 1e-4, 1e-4, cfg,
                                                                  backend=b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':38s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for name, fn in cases().items():
        fn("numba")  # compile
        t = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) * 1e3
             for b in ("numba", "numpy")}
        print(f"{name:38s} {t['numba']:11.1f} {t['numpy']:11.1f} {t['numpy'] / t['numba']:7.1f}x")


if __name__ == "__main__":
    main()

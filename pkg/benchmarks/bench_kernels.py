"""Compare the numba and numpy paths of each kernel.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both paths are timed in the same process regardless of RADAUG_DISABLE_NUMBA.
The first numba call (compile or cache load) is excluded from timing.
"""
import argparse
import timeit

import numpy as np

from radaug import _kernels as K


def cases(rng):
    a = rng.integers(0, 50, size=400)
    b = rng.integers(0, 50, size=400)
    lattice = rng.normal(size=(16, 32, 32, 64))
    q = rng.normal(size=(2048, 32))
    k = rng.normal(size=(2048, 8, 32))
    v = rng.normal(size=(2048, 8, 64))
    return {
        "lcs_length 400x400": ("lcs_length", (a, b)),
        "mean_pool3d (16,32,32,64) / 2": ("mean_pool3d", (lattice, (2, 2, 2))),
        "local_attention 2048 x 8": ("local_attention", (q, k, v)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"active backend: {K.BACKEND}")
    print(f"{'kernel':34s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, (name, inputs) in cases(rng).items():
        fast = getattr(K, f"{name}_numba")
        slow = getattr(K, f"{name}_numpy")
        t_np = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat)) * 1e3
        if fast is None:
            print(f"{label:34s} {t_np:10.3f} {'n/a':>10s}")
            continue
        fast(*inputs)
        t_nb = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:34s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()

"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Each kernel is called once untimed (JIT compile / cache load), then timed
over ``--repeat`` calls; the best time is reported.  Outputs are compared
so a speedup never hides a wrong answer.
"""
import argparse
import time

import numpy as np

from cascade_lowrank import _kernels as K


def best_of(fn, args, repeat):
    fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    size = 16
    store = np.zeros((2 * size, 64, 64))
    store[size:] = rng.standard_normal((size, 64, 64))
    tstore = np.zeros((2 * 8, 16, 16, 16))
    tstore[8:] = rng.standard_normal((8, 16, 16, 16))
    return {
        "khatri_rao (64x8, 64x8)": ("khatri_rao", (rng.standard_normal((64, 8)), rng.standard_normal((64, 8)))),
        "sum_nodes (6 of 64x64)": ("sum_nodes", (store, [17, 9, 5, 12, 26, 31])),
        "build_internal (16 leaves 64x64)": ("build_internal", (store, size)),
        "build_internal (8 leaves 16^3)": ("build_internal", (tstore, 8)),
        "prefix_sums (k=8, 128x32)": ("prefix_sums", (rng.standard_normal((128, 32)), rng.standard_normal((8, 128, 32)))),
        "horner (deg 12, 32x32)": ("horner", (rng.standard_normal((13, 32, 32)), 1.3)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':36s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for label, (name, inputs) in cases(rng).items():
        np_fn, nb_fn = K.NUMPY_KERNELS[name], K.NUMBA_KERNELS[name]
        if name == "build_internal":
            # in-place kernel: give each backend its own copy
            a, b = inputs[0].copy(), inputs[0].copy()
            np_fn(a, inputs[1])
            nb_fn(b, inputs[1])
            assert np.array_equal(a, b), label
        else:
            assert np.allclose(np_fn(*inputs), nb_fn(*inputs), rtol=1e-14, atol=1e-14), label
        t_np = best_of(np_fn, inputs, args.repeat)
        t_nb = best_of(nb_fn, inputs, args.repeat)
        print(f"{label:36s} {t_np * 1e6:10.1f} {t_nb * 1e6:10.1f} {t_np / t_nb:7.2f}x")


if __name__ == "__main__":
    main()

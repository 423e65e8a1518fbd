#!/usr/bin/env python3
"""Benchmark-scale (L=288) wall-clock comparison of the plain subblock
multiply against the packed pipeline for W in {2, 3, 4}, both modes."""

import time

import numpy as np

from tdgemm import packing
from tdgemm.blocking import plain_subblock_gemm

L = 288
TRIALS = 10


def _t(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main():
    rng = np.random.default_rng(0)
    a = packing.round_half_away(rng.uniform(-20, 20, size=(L, L)).astype(np.float32))
    b = packing.round_half_away(rng.uniform(-20, 20, size=(L, L)).astype(np.float32))
    rmax = packing.compute_rmax(1.0, 1.0, L, 20, 20)
    z = packing.compute_z(rmax)

    def run_plain():
        plain_subblock_gemm(a, b)

    def make_packed(mode, w):
        def run():
            if mode == packing.SYMMETRIC:
                abar, bbar = packing.pack_symmetric(a, b, w, z)
                packing.unpack_symmetric(packing.multiply_packed_symmetric(abar, bbar), z)
            else:
                abar = packing.pack_asymmetric(a, w, z)
                packing.unpack_asymmetric(packing.multiply_packed_asymmetric(abar, b), z, w)
        return run

    run_plain()
    t_plain = np.median([_t(run_plain) for _ in range(TRIALS)])
    print(f"plain L={L}: {t_plain * 1e3:.2f} ms")
    for mode in packing.MODES:
        for w in (2, 3, 4):
            fn = make_packed(mode, w)
            fn()
            t = np.median([_t(fn) for _ in range(TRIALS)])
            print(f"{mode:>10} W={w}: {t * 1e3:.2f} ms  gain {100 * (t_plain / t - 1):.0f}%")


if __name__ == "__main__":
    main()

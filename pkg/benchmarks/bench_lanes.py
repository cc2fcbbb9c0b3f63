"""Benchmark the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_lanes.py [--repeat 3]

Times the RK4 propagation kernels on representative problem sizes. The two
lanes share one source; the numba lane removes the per-step Python overhead,
which dominates for small state vectors. Run with NLDISP_DISABLE_NUMBA=1 to
confirm the numpy lane stands alone (the comparison then degenerates to one
column).
"""

import argparse
import math
import time

import numpy as np

from nldisp import _accel
from nldisp.coefficients import APField, Mode, constant_profile
from nldisp.discretize import torus_grid, assemble
from nldisp.evolve import coeff_pack
from nldisp.kernels import gaussian_kernel


def build_case(n):
    L = 16.0 if n <= 256 else 32.0
    K = assemble(gaussian_kernel(1.0, 1, 1.0, 4.0), torus_grid(L, n))
    a = APField(c0=constant_profile(0.0),
                modes=(Mode(profile=constant_profile(1.0), omega=1.0,
                            theta=-math.pi / 2),
                       Mode(profile=constant_profile(1.0), omega=math.sqrt(2.0),
                            theta=-math.pi / 2)))
    return K.dense, coeff_pack(a, K.grid)


def time_lane(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    lanes = [("numpy", False)]
    if _accel.HAVE_NUMBA:
        _accel.warmup()
        lanes.append(("numba", True))

    cases = []
    for n, steps in ((64, 8000), (256, 4000)):
        K, pack = build_case(n)
        u0 = np.ones(n)
        for lane, jit in lanes:
            f = lambda: _accel.rk4_trace(K, pack, u0, 0.0, 0.05, steps,
                                         stride=steps // 8, use_numba=jit)
            cases.append((f"rk4_trace n={n} steps={steps}", lane,
                          time_lane(f, args.repeat), steps))
    K, pack = build_case(128)
    U0 = np.eye(128)
    for lane, jit in lanes:
        f = lambda: _accel.rk4_mat(K, pack, U0, 0.0, 0.05, 200, use_numba=jit)
        cases.append(("rk4_mat n=128 steps=200", lane, time_lane(f, args.repeat), 200))

    print(f"{'case':34s} {'lane':6s} {'best [s]':>10s} {'steps/s':>12s}")
    base = {}
    for name, lane, secs, steps in cases:
        print(f"{name:34s} {lane:6s} {secs:10.4f} {steps / secs:12.0f}")
        if lane == "numpy":
            base[name] = secs
        elif name in base:
            print(f"{'':34s} {'':6s} {'speedup':>10s} {base[name] / secs:11.2f}x")


if __name__ == "__main__":
    main()

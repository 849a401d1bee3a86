"""Time the numba and numpy kernels on desk-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3]

The first numba call compiles (or loads the on-disk cache); it is reported
separately as ``warmup``.
"""

import argparse
import time

import numpy as np

from affinekg import flow
from affinekg.approx import q_half_box
from affinekg.kernels import linear_form_hits, multivector_profile, nu_sup, omega_profile
from affinekg.subspace import AffineSubspace, Ball


def _cases():
    H = AffineSubspace.from_matrix([["sqrt2 - 1"], ["sqrt3 - 1"]])
    U = Ball((0.0,), 0.5)
    X, _ = flow.sample_ball(U, 10**4)
    F = H.parametrize_grid(X)
    Qs = q_half_box(2, 64).astype(float)
    thr = 1e-4 / np.abs(Qs).max(axis=1) ** 2
    A = H.A_float()
    params = flow.FlowParameters(4, 0.25, 0.5, 1 / 12, 1, 2)
    Xk, _ = flow.sample_ball(U, 201)
    bases = flow.primitive_bases_array(1, 2, 2, 10)
    maps = flow.h_matrices(H, Xk, params)[:, :, [0, 2, 3]]
    subsets = flow.star_subsets(1, 2, 2)
    M = np.array([[1.0, 0.5], [0.3, -0.7], [0.2, 0.9]])
    return {
        "linear_form_hits 1e4 x 8.3e3": lambda b: linear_form_hits(F, Qs, thr, backend=b),
        "omega_profile Q=2000": lambda b: omega_profile(A.T.copy(), 2000, backend=b),
        "multivector_profile H=60": lambda b: multivector_profile(M, 1, 60, backend=b),
        "nu_sup rank 2, height 10": lambda b: nu_sup(bases, maps, subsets, backend=b),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'kernel':32s} {'numpy s':>10s} {'numba s':>10s} {'warmup s':>10s} {'speedup':>8s}")
    for name, fn in _cases().items():
        t0 = time.perf_counter()
        fn("numba")
        warm = time.perf_counter() - t0
        best = {}
        for b in ("numpy", "numba"):
            ts = []
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                fn(b)
                ts.append(time.perf_counter() - t0)
            best[b] = min(ts)
        print(f"{name:32s} {best['numpy']:10.4f} {best['numba']:10.4f} {warm:10.4f} "
              f"{best['numpy'] / best['numba']:8.1f}x")


if __name__ == "__main__":
    main()

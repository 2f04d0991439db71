"""Time the numba and numpy paths of each kernel on representative sizes.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from obcsaa import _kernels as K


def cases():
    rng = np.random.default_rng(0)
    mag = np.abs(rng.standard_normal(50890))
    phi = np.asfortranarray(rng.standard_normal((3000, 12730)) / np.sqrt(3000))
    idx = np.sort(rng.choice(12730, 800, replace=False))
    vals = rng.standard_normal(800)
    u = 16
    k = rng.integers(100, 5000, u).astype(float)
    caps = rng.uniform(1e-5, 1e-3, u)
    n = 1000
    num, den, w = rng.uniform(-1, 2, n), rng.uniform(0.5, 3, n), rng.dirichlet(np.ones(n))
    yield "topk D=50890 k=800", (mag, 800), K.np_topk_indices, K.nb_topk_indices
    yield "column_matvec S=3000 k=800", (phi, idx, vals), K.np_column_matvec, K.nb_column_matvec
    yield f"enumerate U={u}", (k, caps, 20.0, 30.0, 1e-7, 0.5), K.np_enumerate_schedules, K.nb_enumerate_schedules
    yield "admm_r_block U=1000", (num, den, w, 0.1, 1e-6), K.np_admm_r_block, K.nb_admm_r_block


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':32s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, a, f_np, f_nb in cases():
        f_nb(*a)  # compile
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()

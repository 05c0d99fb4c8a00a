"""Numba vs numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once untimed (JIT warm-up), then ``repeat`` timed calls;
the best time is reported together with the max deviation between the
two backends.
"""

import argparse
import time

import numpy as np

from rydpair import _accel
from rydpair.spin_dynamics import Lattice, _lower_neighbors, enumerate_truncated_basis


def best_of(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases():
    n = 200_000
    r = np.linspace(1e-3, 60.0, n)
    g = 2.0 / r - 0.05
    yield "numerov_inward", lambda k: k.numerov_inward(g, r[1] - r[0], 1e-30)

    lat = Lattice.square(5, 5, 1.0)
    lower = _lower_neighbors(25, lat.neighbor_edges(1.0))
    yield "independent_sets 5x5", lambda k: k.independent_sets(25, lower)

    basis = enumerate_truncated_basis(25, lat.neighbor_edges(1.0))
    src, dst = basis.flip_tables()[12]
    psi = np.random.default_rng(0).normal(size=basis.size) + 0j
    psi /= np.linalg.norm(psi)

    def flip(k):
        p = psi.copy()
        k.apply_flip_rotation(p, src, dst, np.cos(0.01), np.sin(0.01))
        return p
    yield f"apply_flip_rotation ({basis.size} states)", flip

    probs = np.abs(psi) ** 2
    yield "site_occupations", lambda k: k.site_occupations(probs, basis.configurations, 25)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _accel.numba_kernels is None:
        print("numba not available; only the numpy kernels exist")
        return
    print(f"{'kernel':40s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in cases():
        a = np.asarray(fn(_accel.numpy_kernels))
        b = np.asarray(fn(_accel.numba_kernels))
        diff = float(np.abs(a.astype(complex) - b.astype(complex)).max()) if a.shape == b.shape else float("nan")
        t_np = best_of(lambda: fn(_accel.numpy_kernels), args.repeat)
        t_nb = best_of(lambda: fn(_accel.numba_kernels), args.repeat)
        print(f"{name:40s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {t_np / t_nb:8.1f} {diff:10.1e}")


if __name__ == "__main__":
    main()

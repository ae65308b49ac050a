"""Benchmark the compiled kernels against the pure-NumPy fallback.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from rfphi4._backend import get_backend
from rfphi4.lattice import LatticeVolume
from rfphi4.model import BoundaryField, ModelParams
from rfphi4.simulation import make_chain
from rfphi4.walks import _padded_adjacency


def timeit(fn, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_range_kernels(backend):
    vol = LatticeVolume((3, 3))
    adj, deg = _padded_adjacency(vol.all_sites())
    u = 1 / 104.0
    return timeit(lambda: backend.range_kernels(adj, deg, u, 12))


def bench_closed_counts(backend):
    vol = LatticeVolume((3, 3))
    adj, deg = _padded_adjacency(vol.all_sites())
    return timeit(lambda: backend.closed_range_counts(adj, deg, 12))


def bench_sweeps(backend, shape=(16, 16, 16), sweeps=50):
    p = ModelParams(q=0.01, m_star=10.0, a=1.0, d=len(shape))
    vol = LatticeVolume(shape)
    bc = BoundaryField.constant(p.m_star)
    eta = np.zeros(vol.nsites)

    def run():
        chain = make_chain(vol, eta, p, bc, seed=1, init="random")
        kappa2 = 2 * vol.dim * p.q
        for _ in range(sweeps):
            backend.sweep(chain.m_ext, chain.colors, chain.nbr, chain.eta,
                          p.q, p.m_star, kappa2, chain.rng)

    t = timeit(run, repeat=2)
    return t, vol.nsites * sweeps / t


def main():
    backends = {"python": get_backend(pure_python=True)}
    try:
        backends["cython"] = get_backend(pure_python=False)
    except ImportError:
        print("compiled extension not available; benchmarking fallback only")

    rows = {}
    for name, backend in backends.items():
        t_rk = bench_range_kernels(backend)
        t_cc = bench_closed_counts(backend)
        t_sw, rate = bench_sweeps(backend)
        rows[name] = (t_rk, t_cc, t_sw, rate)
        print(f"{name:>8s}: range_kernels(3x3,L=12) {t_rk*1e3:8.1f} ms | "
              f"closed_counts {t_cc*1e3:8.1f} ms | "
              f"50 sweeps 16^3 {t_sw*1e3:8.1f} ms ({rate/1e6:.2f} Msite-updates/s)")
    if len(rows) == 2:
        py, cy = rows["python"], rows["cython"]
        print(f"speedup: range_kernels x{py[0]/cy[0]:.1f}, "
              f"closed_counts x{py[1]/cy[1]:.1f}, sweeps x{py[2]/cy[2]:.1f}")


if __name__ == "__main__":
    main()

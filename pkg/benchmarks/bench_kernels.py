"""Compare the numba kernels with their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Times the Jacobi eigensolver on random cluster-graph Laplacians and RK4 on
the consensus ODE, with both backends, and checks that they agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from clusterconsensus import dynamics, graph_core, spectral
from clusterconsensus._accel import HAS_NUMBA
from clusterconsensus.graph_core import TopologySpec


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def laplacian_for(n_nodes):
    r = 4
    size = n_nodes // r
    spec = TopologySpec((size,) * r, "random", p=0.3, gateways=2, external="ring")
    return graph_core.laplacian(graph_core.generate(spec, 0))[0]


def bench_jacobi(sizes, repeat):
    rows = []
    for n in sizes:
        L = laplacian_for(n)
        t_fast, a = best_of(lambda: spectral.eigenvalues_symmetric(L, use_numba=True), repeat)
        t_slow, b = best_of(lambda: spectral.eigenvalues_symmetric(L, use_numba=False), repeat)
        gap = float(np.abs(a.eigenvalues - b.eigenvalues).max())
        rows.append(("jacobi", f"N={L.shape[0]}", t_fast, t_slow, gap))
    return rows


def bench_rk4(sizes, steps, repeat):
    rows = []
    for n in sizes:
        L = laplacian_for(n)
        x0 = np.random.default_rng(0).uniform(0, 10, L.shape[0])
        dt = 0.5 / spectral.spectral_norm(L)
        t_fast, a = best_of(lambda: dynamics.rk4_linear(L, x0, dt, steps, use_numba=True), repeat)
        t_slow, b = best_of(lambda: dynamics.rk4_linear(L, x0, dt, steps, use_numba=False), repeat)
        gap = float(np.abs(a - b).max())
        rows.append(("rk4", f"N={L.shape[0]} steps={steps}", t_fast, t_slow, gap))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--quick", action="store_true", help="small sizes only")
    args = parser.parse_args(argv)

    if not HAS_NUMBA:
        print("numba unavailable or disabled: both columns time the numpy path")
    # compile once, outside the timings
    spectral.eigenvalues_symmetric(np.eye(3), use_numba=True)
    dynamics.rk4_linear(np.zeros((2, 2)), np.zeros(2), 0.1, 2, use_numba=True)

    sizes = [20, 40] if args.quick else [20, 40, 80, 160]
    steps = 1000 if args.quick else 10000
    rows = bench_jacobi(sizes, args.repeat) + bench_rk4(sizes, steps, args.repeat)

    print(f"{'kernel':<8} {'case':<22} {'numba [s]':>11} {'numpy [s]':>11} {'speedup':>8} {'max gap':>9}")
    for kernel, case, t_fast, t_slow, gap in rows:
        print(f"{kernel:<8} {case:<22} {t_fast:>11.5f} {t_slow:>11.5f} {t_slow / t_fast:>7.1f}x {gap:>9.1e}")


if __name__ == "__main__":
    main()

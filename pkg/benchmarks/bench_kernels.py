#!/usr/bin/env python3
"""Benchmark the JIT assembly kernels against the pure-numpy fallback.

Runs each kernel on preset-sized data (100x100 fine cells) and on a 4x
larger grid, and times a full nonlinear operator assembly (stiffness +
reaction pair) through both paths.  The numpy path is what you get with
MSPEX_PURE_NUMPY=1.
"""

import time

import numpy as np

from mspex import build_grids
from mspex import assembly, kernels
from mspex.problems import Reaction, generate_channel_kappa


def timeit(fn, *args, repeat=20):
    fn(*args)  # warm up (includes JIT compilation)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_kernels(nf):
    grid = build_grids(nf // 10, nf)
    rng = np.random.default_rng(0)
    values = rng.standard_normal(grid.n_nodes)
    coeff = rng.random((grid.n_cells, 4)) + 0.5
    cell_vals = rng.standard_normal((grid.n_cells, 4))
    mats = assembly.quad_local_mass(grid.h)
    vecs = assembly.quad_local_vector(grid.h)

    cases = [
        ("gather_quad", (values, grid.cell_nodes, assembly.PHI)),
        ("cell_matrices", (coeff, mats)),
        ("cell_vectors", (coeff, vecs)),
        ("scatter_vector", (cell_vals, grid.cell_nodes, grid.n_nodes)),
        ("cell_integral", (coeff, grid.h * grid.h / 4.0)),
    ]
    print(f"\n-- kernels, {nf}x{nf} cells "
          f"(numba {'on' if kernels.USING_NUMBA else 'off'}) --")
    print(f"{'kernel':>16} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}")
    for name, args in cases:
        t_active = timeit(kernels.active_impls[name], *args) * 1e3
        t_numpy = timeit(kernels.numpy_impls[name], *args) * 1e3
        print(f"{name:>16} {t_active:12.3f} {t_numpy:12.3f} {t_numpy / t_active:9.2f}x")


def bench_operator_assembly(nf):
    grid = build_grids(nf // 10, nf)
    kappa = generate_channel_kappa(nf, 7, 1e4, 6)
    reaction = Reaction("cubic", np.zeros(grid.n_cells))
    rng = np.random.default_rng(1)
    u = rng.standard_normal(grid.n_dofs)
    alpha = lambda w: 1.0 + w * w

    def full_assembly():
        assembly.assemble_stiffness(grid, kappa, (u, alpha))
        assembly.assemble_reaction(grid, reaction, u)

    t = timeit(full_assembly, repeat=10) * 1e3
    print(f"\nnonlinear operator assembly ({nf}x{nf}): {t:.1f} ms per Newton iteration")


if __name__ == "__main__":
    for nf in (100, 200):
        bench_kernels(nf)
    bench_operator_assembly(100)

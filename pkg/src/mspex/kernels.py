"""Hot per-cell quadrature kernels.

Everything here is called once per Newton iteration of every time step,
so the loops are JIT compiled with numba.  Setting MSPEX_PURE_NUMPY=1
(or running without numba installed) selects vectorized numpy versions
that agree to machine rounding; benchmarks/bench_kernels.py compares
the two paths.
"""

import os

import numpy as np

_want_numba = os.environ.get("MSPEX_PURE_NUMPY", "0") not in ("1", "true", "yes")

if _want_numba:
    try:
        from numba import njit
        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False
else:
    USING_NUMBA = False

if not USING_NUMBA:
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        def wrap(fn):
            return fn
        return wrap


@njit(cache=True)
def _gather_quad_nb(values, cell_nodes, phi):
    n_cells = cell_nodes.shape[0]
    nq = phi.shape[0]
    out = np.empty((n_cells, nq))
    for c in range(n_cells):
        for q in range(nq):
            acc = 0.0
            for i in range(4):
                acc += values[cell_nodes[c, i]] * phi[q, i]
            out[c, q] = acc
    return out


def _gather_quad_np(values, cell_nodes, phi):
    return values[cell_nodes] @ phi.T


@njit(cache=True)
def _cell_matrices_nb(coeff, quad_mats):
    n_cells = coeff.shape[0]
    nq = coeff.shape[1]
    out = np.empty((n_cells, 4, 4))
    for c in range(n_cells):
        for i in range(4):
            for j in range(4):
                acc = 0.0
                for q in range(nq):
                    acc += coeff[c, q] * quad_mats[q, i, j]
                out[c, i, j] = acc
    return out


def _cell_matrices_np(coeff, quad_mats):
    return np.einsum("cq,qij->cij", coeff, quad_mats)


@njit(cache=True)
def _cell_vectors_nb(coeff, quad_vecs):
    n_cells = coeff.shape[0]
    nq = coeff.shape[1]
    out = np.zeros((n_cells, 4))
    for c in range(n_cells):
        for q in range(nq):
            w = coeff[c, q]
            for i in range(4):
                out[c, i] += w * quad_vecs[q, i]
    return out


def _cell_vectors_np(coeff, quad_vecs):
    return coeff @ quad_vecs


@njit(cache=True)
def _scatter_vector_nb(cell_vals, cell_nodes, n_nodes):
    out = np.zeros(n_nodes)
    for c in range(cell_vals.shape[0]):
        for i in range(4):
            out[cell_nodes[c, i]] += cell_vals[c, i]
    return out


def _scatter_vector_np(cell_vals, cell_nodes, n_nodes):
    out = np.zeros(n_nodes)
    np.add.at(out, cell_nodes.ravel(), cell_vals.ravel())
    return out


@njit(cache=True)
def _cell_integral_nb(values, weight):
    total = 0.0
    for c in range(values.shape[0]):
        for q in range(values.shape[1]):
            total += values[c, q] * weight
    return total


def _cell_integral_np(values, weight):
    return float(values.sum() * weight)


if USING_NUMBA:
    gather_quad = _gather_quad_nb
    cell_matrices = _cell_matrices_nb
    cell_vectors = _cell_vectors_nb
    scatter_vector = _scatter_vector_nb
    cell_integral = _cell_integral_nb
else:
    gather_quad = _gather_quad_np
    cell_matrices = _cell_matrices_np
    cell_vectors = _cell_vectors_np
    scatter_vector = _scatter_vector_np
    cell_integral = _cell_integral_np

# numpy reference implementations stay importable for tests/benchmarks
numpy_impls = {
    "gather_quad": _gather_quad_np,
    "cell_matrices": _cell_matrices_np,
    "cell_vectors": _cell_vectors_np,
    "scatter_vector": _scatter_vector_np,
    "cell_integral": _cell_integral_np,
}
active_impls = {
    "gather_quad": gather_quad,
    "cell_matrices": cell_matrices,
    "cell_vectors": cell_vectors,
    "scatter_vector": scatter_vector,
    "cell_integral": cell_integral,
}

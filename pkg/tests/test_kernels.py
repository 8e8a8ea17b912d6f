import os
import subprocess
import sys

import numpy as np
import pytest

from mspex import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def test_gather_quad_paths_agree(rng):
    values = rng.standard_normal(121)
    cell_nodes = rng.integers(0, 121, size=(40, 4))
    phi = rng.random((4, 4))
    a = kernels.active_impls["gather_quad"](values, cell_nodes, phi)
    b = kernels.numpy_impls["gather_quad"](values, cell_nodes, phi)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_cell_matrices_paths_agree(rng):
    coeff = rng.standard_normal((50, 4))
    mats = rng.standard_normal((4, 4, 4))
    a = kernels.active_impls["cell_matrices"](coeff, mats)
    b = kernels.numpy_impls["cell_matrices"](coeff, mats)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_cell_vectors_paths_agree(rng):
    coeff = rng.standard_normal((50, 4))
    vecs = rng.standard_normal((4, 4))
    a = kernels.active_impls["cell_vectors"](coeff, vecs)
    b = kernels.numpy_impls["cell_vectors"](coeff, vecs)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_scatter_vector_paths_agree(rng):
    cell_vals = rng.standard_normal((60, 4))
    cell_nodes = rng.integers(0, 80, size=(60, 4))
    a = kernels.active_impls["scatter_vector"](cell_vals, cell_nodes, 80)
    b = kernels.numpy_impls["scatter_vector"](cell_vals, cell_nodes, 80)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


def test_cell_integral_paths_agree(rng):
    vals = rng.standard_normal((70, 4))
    a = kernels.active_impls["cell_integral"](vals, 0.37)
    b = kernels.numpy_impls["cell_integral"](vals, 0.37)
    assert a == pytest.approx(b, rel=1e-13)


def test_pure_numpy_env_flag():
    code = "import mspex.kernels as k; print(k.USING_NUMBA)"
    env = dict(os.environ, MSPEX_PURE_NUMPY="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_numba_active_by_default():
    # the test environment has numba installed; the default path uses it
    env = {k: v for k, v in os.environ.items() if k != "MSPEX_PURE_NUMPY"}
    code = "import mspex.kernels as k; print(k.USING_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "True"

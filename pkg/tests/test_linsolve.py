import numpy as np
import pytest
import scipy.sparse as sp

from mspex import ConstraintRankError
from mspex.linsolve import (
    SaddleSystem,
    eig_sym_generalized,
    solve_saddle,
    solve_spd,
)


def test_spd_identity():
    b = np.array([3.0, -1.0, 2.0])
    x = solve_spd(sp.identity(3, format="csr"), b)
    np.testing.assert_allclose(x, b)


def test_spd_diagonal():
    A = sp.diags([2.0] * 5).tocsr()
    x = solve_spd(A, np.ones(5))
    np.testing.assert_allclose(x, 0.5 * np.ones(5))


def test_spd_random_residual():
    rng = np.random.default_rng(0)
    R = rng.standard_normal((50, 50))
    A = sp.csr_matrix(R.T @ R + np.eye(50))
    b = rng.standard_normal(50)
    x = solve_spd(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_eig_diagonal_smallest():
    vals, vecs = eig_sym_generalized(np.diag([1.0, 2.0, 3.0]), np.eye(3), k=2)
    np.testing.assert_allclose(vals, [1.0, 2.0])
    np.testing.assert_allclose(np.abs(vecs), np.eye(3)[:, :2], atol=1e-12)


def test_eig_equal_matrices():
    rng = np.random.default_rng(1)
    R = rng.standard_normal((6, 6))
    B = R.T @ R + np.eye(6)
    vals, _ = eig_sym_generalized(B, B)
    np.testing.assert_allclose(vals, np.ones(6), rtol=1e-12)


def test_eig_two_by_two():
    # characteristic polynomial of [[2,-1],[-1,2]]: (2-l)^2 = 1
    vals, vecs = eig_sym_generalized(np.array([[2.0, -1.0], [-1.0, 2.0]]), np.eye(2))
    np.testing.assert_allclose(vals, [1.0, 3.0], rtol=1e-14)
    A = np.array([[2.0, -1.0], [-1.0, 2.0]])
    for j in range(2):
        r = A @ vecs[:, j] - vals[j] * vecs[:, j]
        assert np.linalg.norm(r) <= 1e-12


def test_eig_b_orthonormality_and_residual():
    rng = np.random.default_rng(2)
    n = 20
    A = rng.standard_normal((n, n))
    A = 0.5 * (A + A.T)
    R = rng.standard_normal((n, n))
    B = R.T @ R + n * np.eye(n)
    vals, vecs = eig_sym_generalized(A, B, k=5)
    assert (np.diff(vals) >= -1e-12).all()
    np.testing.assert_allclose(vecs.T @ B @ vecs, np.eye(5), atol=1e-10)
    nA, nB = np.linalg.norm(A), np.linalg.norm(B)
    for j in range(5):
        r = A @ vecs[:, j] - vals[j] * B @ vecs[:, j]
        assert np.linalg.norm(r) <= 1e-8 * (nA + abs(vals[j]) * nB)


def test_eig_rejects_indefinite_b():
    with pytest.raises(ValueError):
        eig_sym_generalized(np.eye(2), np.diag([1.0, -1.0]))


def test_saddle_without_constraints_is_spd_solve():
    rng = np.random.default_rng(3)
    R = rng.standard_normal((10, 10))
    A = R.T @ R + np.eye(10)
    b = rng.standard_normal(10)
    x, mus = solve_saddle(SaddleSystem(A, [], rhs=b))
    assert mus == []
    np.testing.assert_allclose(A @ x, b, atol=1e-9)


def test_saddle_mean_zero_projection():
    n = 8
    b = np.ones(n)
    C = np.ones((1, n)) / n
    x, _ = solve_saddle(SaddleSystem(np.eye(n), [(C, np.zeros(1))], rhs=b))
    np.testing.assert_allclose(x, b - b.mean(), atol=1e-10)


def test_saddle_against_dense_kkt_oracle():
    rng = np.random.default_rng(4)
    n, m = 20, 3
    R = rng.standard_normal((n, n))
    A = R.T @ R + np.eye(n)
    C = rng.standard_normal((m, n))
    d = rng.standard_normal(m)
    b = rng.standard_normal(n)
    x, (mu,) = solve_saddle(SaddleSystem(A, [(C, d)], rhs=b))

    K = np.zeros((n + m, n + m))
    K[:n, :n] = A
    K[:n, n:] = C.T
    K[n:, :n] = C
    sol = np.linalg.solve(K, np.concatenate([b, d]))
    np.testing.assert_allclose(x, sol[:n], atol=1e-9)
    np.testing.assert_allclose(mu, sol[n:], atol=1e-8)
    assert np.linalg.norm(C @ x - d) <= 1e-9 * max(1.0, np.linalg.norm(d))
    kkt = np.linalg.norm(A @ x + C.T @ mu - b)
    assert kkt <= 1e-9 * np.linalg.norm(b)


def test_saddle_primal_invariant_under_row_rescaling():
    rng = np.random.default_rng(5)
    n, m = 15, 2
    R = rng.standard_normal((n, n))
    A = R.T @ R + np.eye(n)
    C = rng.standard_normal((m, n))
    d = rng.standard_normal(m)
    b = rng.standard_normal(n)
    x1, _ = solve_saddle(SaddleSystem(A, [(C, d)], rhs=b))
    s = np.array([1e3, 1e-2])
    x2, _ = solve_saddle(SaddleSystem(A, [(C * s[:, None], d * s)], rhs=b))
    assert np.linalg.norm(x1 - x2) <= 1e-9 * np.linalg.norm(x1)


def test_saddle_rank_deficient_family_named():
    A = np.eye(6)
    C = np.vstack([np.ones(6), np.ones(6)])  # duplicated row
    with pytest.raises(ConstraintRankError) as err:
        solve_saddle(SaddleSystem(A, [(C, np.zeros(2))]))
    assert "family 0" in str(err.value)


def test_saddle_two_families():
    rng = np.random.default_rng(6)
    n = 12
    R = rng.standard_normal((n, n))
    A = R.T @ R + np.eye(n)
    C1 = rng.standard_normal((2, n))
    C2 = rng.standard_normal((3, n))
    d1, d2 = rng.standard_normal(2), rng.standard_normal(3)
    x, (m1, m2) = solve_saddle(SaddleSystem(A, [(C1, d1), (C2, d2)]))
    np.testing.assert_allclose(C1 @ x, d1, atol=1e-9)
    np.testing.assert_allclose(C2 @ x, d2, atol=1e-9)
    r = A @ x + C1.T @ m1 + C2.T @ m2
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(A @ x)

"""Sparse SPD solves, dense symmetric generalized eigensolves, and
constrained (saddle point) solves for basis construction.

Local patch problems are small at desk scale; eigenproblems go through
dense LAPACK, constrained minimizations through a Schur complement on a
sparse factorization of the SPD block so one factorization serves every
basis function of a patch.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConstraintRankError, ConvergenceError

_RANK_TOL = 1e-10


def solve_spd(A, b, tol=1e-10):
    """Solve A x = b for symmetric positive definite A.

    Direct sparse factorization with a CG fallback; raises if the
    relative residual exceeds tol.
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    x = None
    if sp.issparse(A):
        try:
            x = spla.splu(A.tocsc()).solve(b)
        except RuntimeError:
            x = None
    else:
        try:
            c = sla.cho_factor(np.asarray(A, dtype=float))
            x = sla.cho_solve(c, b)
        except np.linalg.LinAlgError:
            x = None
    if x is None or not np.all(np.isfinite(x)):
        x, info = spla.cg(sp.csr_matrix(A), b, rtol=tol * 0.1, maxiter=20 * len(b))
        if info != 0:
            res = np.linalg.norm(A @ x - b) / bnorm
            raise ConvergenceError(
                f"SPD solve failed (cg info={info}), relative residual {res:.3e}",
                residual=res,
            )
    res = np.linalg.norm(A @ x - b) / bnorm
    if res > tol:
        raise ConvergenceError(
            f"SPD solve residual {res:.3e} exceeds tolerance {tol:.1e}", residual=res
        )
    return x


class SpdFactor:
    """Reusable factorization of an SPD operator (sparse LU or dense Cholesky)."""

    def __init__(self, A):
        if sp.issparse(A):
            self._lu = spla.splu(A.tocsc())
            self._dense = None
        else:
            self._dense = sla.cho_factor(np.asarray(A, dtype=float))
            self._lu = None

    def solve(self, b):
        if self._lu is not None:
            return self._lu.solve(np.asarray(b, dtype=float))
        return sla.cho_solve(self._dense, np.asarray(b, dtype=float))


def eig_sym_generalized(A, B, k=None, which="smallest"):
    """k eigenpairs of A v = lam B v (A symmetric, B SPD), dense path.

    Returns eigenvalues in ascending order and B-orthonormal vectors,
    with a deterministic sign convention (largest component positive).
    """
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
    n = A.shape[0]
    if k is None:
        k = n
    if k > n:
        raise ValueError(f"requested {k} eigenpairs from a {n}-dim problem")
    try:
        sla.cholesky(B)
    except np.linalg.LinAlgError:
        raise ValueError("B must be symmetric positive definite")
    if which == "smallest":
        subset = [0, k - 1]
    elif which == "largest":
        subset = [n - k, n - 1]
    else:
        raise ValueError(f"which must be 'smallest' or 'largest', got {which!r}")
    vals, vecs = sla.eigh(A, B, subset_by_index=subset)
    # fix signs so repeated runs give identical bases
    piv = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[piv, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals, vecs * signs


class SaddleSystem:
    """Constrained quadratic problem: minimize x'Ax/2 - b'x  s.t. C_k x = d_k."""

    def __init__(self, a_block, constraints, rhs=None):
        self.a_block = a_block
        self.constraints = [
            (np.atleast_2d(np.asarray(C, dtype=float)), np.asarray(d, dtype=float))
            for C, d in constraints
        ]
        n = a_block.shape[0]
        self.rhs = np.zeros(n) if rhs is None else np.asarray(rhs, dtype=float)


class SaddleSolver:
    """Factorizes once (SPD block + Schur complement of the stacked
    constraints) and solves for many right-hand sides."""

    def __init__(self, a_block, constraint_mats):
        self.n = a_block.shape[0]
        self.blocks = [np.atleast_2d(np.asarray(C, dtype=float)) for C in constraint_mats]
        self.sizes = [C.shape[0] for C in self.blocks]
        self._check_ranks()
        self.factor = SpdFactor(a_block)
        if self.sizes and sum(self.sizes) > 0:
            C = np.vstack(self.blocks)
            self._C = C
            self._AinvCt = self.factor.solve(C.T)
            if self._AinvCt.ndim == 1:
                self._AinvCt = self._AinvCt[:, None]
            S = C @ self._AinvCt
            try:
                self._schur = sla.cho_factor(0.5 * (S + S.T))
            except np.linalg.LinAlgError:
                raise ConstraintRankError(
                    "stacked constraint blocks are rank deficient (singular Schur complement)"
                )
        else:
            self._C = None

    def _check_ranks(self):
        for fam, C in enumerate(self.blocks):
            if C.shape[0] == 0:
                continue
            svals = sla.svdvals(C)
            if svals[-1] <= _RANK_TOL * max(svals[0], 1e-300):
                raise ConstraintRankError(
                    f"constraint family {fam} is rank deficient "
                    f"(sigma_min/sigma_max = {svals[-1] / svals[0]:.2e})"
                )

    def solve(self, rhs=None, targets=None):
        """Return (x, [mu_k]) for primal rhs and per-family constraint values."""
        b = np.zeros(self.n) if rhs is None else np.asarray(rhs, dtype=float)
        if self._C is None:
            return self.factor.solve(b), []
        d = np.concatenate(
            [np.zeros(m) for m in self.sizes]
            if targets is None
            else [np.asarray(t, dtype=float) for t in targets]
        )
        ainv_b = self.factor.solve(b)
        mu = sla.cho_solve(self._schur, self._C @ ainv_b - d)
        x = ainv_b - self._AinvCt @ mu
        mus = []
        off = 0
        for m in self.sizes:
            mus.append(mu[off:off + m])
            off += m
        return x, mus


def solve_saddle(system, tol=1e-9):
    """Solve one SaddleSystem; verifies stationarity and constraint residuals."""
    solver = SaddleSolver(system.a_block, [C for C, _ in system.constraints])
    x, mus = solver.solve(system.rhs, [d for _, d in system.constraints])
    A = system.a_block
    stat = A @ x - system.rhs
    scale = max(np.linalg.norm(system.rhs), np.linalg.norm(A @ x), 1e-300)
    for (C, _), mu in zip(system.constraints, mus):
        stat = stat + C.T @ mu
        scale = max(scale, np.linalg.norm(C.T @ mu))
    stat_res = np.linalg.norm(stat) / scale
    if stat_res > tol:
        raise ConvergenceError(
            f"saddle stationarity residual {stat_res:.3e} > {tol:.1e}", residual=stat_res
        )
    for fam, ((C, d), _) in enumerate(zip(system.constraints, mus)):
        r = np.linalg.norm(C @ x - d)
        s = max(np.linalg.norm(d), np.linalg.norm(C @ x), 1e-300)
        if r / s > tol and r > tol * max(1.0, np.linalg.norm(x)):
            raise ConvergenceError(
                f"constraint family {fam} residual {r / s:.3e} > {tol:.1e}",
                residual=r / s,
            )
    return x, mus

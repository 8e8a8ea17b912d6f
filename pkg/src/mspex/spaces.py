"""Coarse space construction.

Four nested constructions, all driven by per-coarse-element spectral
problems weighted by kappa:

  aux    local eigenfunctions inside each coarse element (weighted-mass
         normalization); they define the fast degrees of freedom.
  cem    energy minimizers on oversampled patches constrained to match
         the aux functions; this is the fast space V1 (treated implicitly).
  aux2   local eigenfunctions inside the kernel of the aux projection,
         plain L2 normalization.
  slow   energy minimizers on patches, orthogonal to all aux functions
         and L2-matched to aux2; this is the slow space V2 (treated
         explicitly).
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import assembly
from .exceptions import ConfigError, ConstraintRankError
from .grid import oversample
from .linsolve import SaddleSolver, eig_sym_generalized


class ReducedSpace:
    """Basis matrix over interior fine dofs with per-column provenance."""

    def __init__(self, basis, elem, mode, kind, eigenvalues=None):
        self.basis = sp.csc_matrix(basis)
        self.elem = np.asarray(elem, dtype=np.int64)
        self.mode = np.asarray(mode, dtype=np.int64)
        self.kind = kind
        self.eigenvalues = eigenvalues  # per-element lists, when spectral

    @property
    def n_basis(self):
        return self.basis.shape[1]

    @property
    def n_dofs(self):
        return self.basis.shape[0]

    def column(self, j):
        return np.asarray(self.basis[:, j].todense()).ravel()

    def columns_of_element(self, e):
        return np.flatnonzero(self.elem == e)

    def dense(self):
        return self.basis.toarray()

    def __repr__(self):
        return f"ReducedSpace(kind={self.kind!r}, n_basis={self.n_basis})"


def empty_space(grid, kind="slow"):
    return ReducedSpace(
        sp.csc_matrix((grid.n_dofs, 0)), np.empty(0, int), np.empty(0, int), kind
    )


def identity_space(grid):
    """Full fine space as a ReducedSpace (degenerate configs and tests)."""
    n = grid.n_dofs
    return ReducedSpace(sp.identity(n, format="csc"), -np.ones(n, int), np.arange(n), "fine")


def direct_sum(*spaces):
    basis = sp.hstack([s.basis for s in spaces], format="csc")
    elem = np.concatenate([s.elem for s in spaces])
    mode = np.concatenate([s.mode for s in spaces])
    return ReducedSpace(basis, elem, mode, "+".join(s.kind for s in spaces))


def ktilde_field(grid, kappa, variant="h2"):
    """Weight for the local mass form: kappa/H^2, or kappa times the
    summed squared gradients of the coarse partition-of-unity hats."""
    kappa = np.asarray(kappa, dtype=float)
    if variant == "h2":
        return kappa / (grid.H * grid.H)
    if variant == "pou":
        nf, r = grid.nf, grid.ratio
        cx = np.arange(nf) % r
        s = (cx + 0.5) / r
        gsq = 2.0 * ((1 - s) ** 2 + s**2) / (grid.H * grid.H)
        sx = np.tile(gsq, nf)
        sy = np.repeat(gsq, nf)
        return kappa * (sx + sy)
    raise ConfigError(f"unknown ktilde variant {variant!r} (use 'h2' or 'pou')")


def _scatter_columns(grid, loc_dofs, vecs):
    """Local eigenvector block -> global sparse columns."""
    n_loc, n_col = vecs.shape
    rows = np.tile(loc_dofs, n_col)
    cols = np.repeat(np.arange(n_col), n_loc)
    return sp.coo_matrix(
        (np.asarray(vecs.T, dtype=float).ravel(), (rows, cols)),
        shape=(grid.n_dofs, n_col),
    ).tocsc()


def build_aux_space(grid, kappa, n_modes, ktilde_variant="h2", operators=None):
    """Per-element spectral basis: n_modes smallest eigenpairs of the
    kappa-weighted Dirichlet problem against the weighted mass form."""
    if n_modes < 1:
        raise ConfigError(f"need at least one auxiliary mode per element, got {n_modes}")
    A_full, S_full = _operators(grid, kappa, ktilde_variant, operators)
    cols, elems, modes, eigs = [], [], [], []
    for e in range(grid.n_coarse):
        loc_nodes = grid.coarse_interior_nodes(e)
        if n_modes > loc_nodes.size:
            raise ConfigError(
                f"element {e}: requested {n_modes} modes but only "
                f"{loc_nodes.size} local dofs"
            )
        A_loc = A_full[loc_nodes][:, loc_nodes].toarray()
        S_loc = S_full[loc_nodes][:, loc_nodes].toarray()
        vals, vecs = eig_sym_generalized(A_loc, S_loc, k=n_modes, which="smallest")
        cols.append(_scatter_columns(grid, grid.dof_of_node[loc_nodes], vecs))
        elems.extend([e] * n_modes)
        modes.extend(range(n_modes))
        eigs.append(vals)
    return ReducedSpace(sp.hstack(cols, format="csc"), elems, modes, "aux", eigs)


def project_onto_aux(space_aux, s_matrix, u):
    """Weighted-mass orthogonal projection onto the auxiliary space.

    Assumes the aux basis is orthonormal in the weighted form (true by
    construction); block diagonal per coarse element.
    """
    Z = space_aux.basis
    return Z @ (Z.T @ (s_matrix @ u))


def _operators(grid, kappa, ktilde_variant, operators):
    """(stiffness, weighted mass) on full nodes, reused across builders."""
    if operators is not None:
        return operators
    A_full = assembly.assemble_stiffness(grid, kappa, full=True)
    S_full = assembly.assemble_mass(grid, ktilde_field(grid, kappa, ktilde_variant), full=True)
    return A_full, S_full


def _patch_restriction(space, patch, grid):
    """Columns of `space` belonging to patch elements, restricted to patch dofs."""
    col_idx = np.flatnonzero(np.isin(space.elem, patch.coarse_elems))
    Z = space.basis[:, col_idx][patch.dofs, :]
    return Z, col_idx


def build_cem_basis(grid, kappa, space_aux, layers, ktilde_variant="h2", operators=None):
    """Constrained energy minimizing basis on oversampled patches.

    One patch factorization per coarse element serves all its modes:
    minimize the kappa energy subject to prescribed weighted-mass values
    against every aux function of the patch.
    """
    A_full, S_full = _operators(grid, kappa, ktilde_variant, operators)
    cols, elems, modes = [], [], []
    for e in range(grid.n_coarse):
        patch = oversample(grid, e, layers)
        A_p = A_full[patch.nodes][:, patch.nodes].tocsc()
        S_p = S_full[patch.nodes][:, patch.nodes]
        Z_p, col_idx = _patch_restriction(space_aux, patch, grid)
        C = (S_p @ Z_p).T.toarray()
        try:
            solver = SaddleSolver(A_p, [C])
        except ConstraintRankError as err:
            raise ConstraintRankError(
                f"element {e} (modes 0..{space_aux.columns_of_element(e).size - 1}): {err}"
            )
        own = space_aux.columns_of_element(e)
        for j, col in enumerate(own):
            psi_loc = np.asarray(space_aux.basis[patch.dofs, col].todense()).ravel()
            d = C @ psi_loc
            phi_loc, _ = solver.solve(None, [d])
            cols.append(_scatter_columns(grid, patch.dofs, phi_loc[:, None]))
            elems.append(e)
            modes.append(int(space_aux.mode[col]))
    return ReducedSpace(sp.hstack(cols, format="csc"), elems, modes, "cem")


def build_aux2_space(grid, kappa, space_aux, n_modes, operators=None,
                     ktilde_variant="h2"):
    """Second spectral family: per element, smallest eigenpairs of the
    kappa Dirichlet problem restricted to the kernel of the aux
    projection (realized by null-space substitution), L2-orthonormal."""
    A_full, S_full = _operators(grid, kappa, ktilde_variant, operators)
    M_full = assembly.assemble_mass(grid, full=True)
    cols, elems, modes, eigs = [], [], [], []
    for e in range(grid.n_coarse):
        loc_nodes = grid.coarse_interior_nodes(e)
        loc_dofs = grid.dof_of_node[loc_nodes]
        A_loc = A_full[loc_nodes][:, loc_nodes].toarray()
        M_loc = M_full[loc_nodes][:, loc_nodes].toarray()
        own = space_aux.columns_of_element(e)
        if own.size:
            S_loc = S_full[loc_nodes][:, loc_nodes]
            Psi = space_aux.basis[:, own][loc_dofs, :].toarray()
            Cons = (S_loc @ Psi).T
            _, svals, Vt = sla.svd(Cons, full_matrices=True)
            rank = int(np.sum(svals > 1e-12 * max(svals[0], 1e-300))) if svals.size else 0
            N = Vt[rank:].T
        else:
            N = np.eye(loc_nodes.size)
        if n_modes > N.shape[1]:
            raise ConfigError(
                f"element {e}: requested {n_modes} slow modes but the "
                f"constrained space has dimension {N.shape[1]}"
            )
        vals, y = eig_sym_generalized(N.T @ A_loc @ N, N.T @ M_loc @ N,
                                      k=n_modes, which="smallest")
        xi = N @ y
        cols.append(_scatter_columns(grid, loc_dofs, xi))
        elems.extend([e] * n_modes)
        modes.extend(range(n_modes))
        eigs.append(vals)
    return ReducedSpace(sp.hstack(cols, format="csc"), elems, modes, "aux2", eigs)


def build_v2_basis(grid, kappa, space_aux, space_aux2, layers,
                   ktilde_variant="h2", operators=None):
    """Slow space: patch energy minimizers, weighted-mass orthogonal to
    every aux function and L2-matched to their aux2 seed."""
    A_full, S_full = _operators(grid, kappa, ktilde_variant, operators)
    M_full = assembly.assemble_mass(grid, full=True)
    cols, elems, modes = [], [], []
    for e in range(grid.n_coarse):
        patch = oversample(grid, e, layers)
        A_p = A_full[patch.nodes][:, patch.nodes].tocsc()
        S_p = S_full[patch.nodes][:, patch.nodes]
        M_p = M_full[patch.nodes][:, patch.nodes]
        Z1_p, _ = _patch_restriction(space_aux, patch, grid)
        Z2_p, _ = _patch_restriction(space_aux2, patch, grid)
        C1 = (S_p @ Z1_p).T.toarray()
        C2 = (M_p @ Z2_p).T.toarray()
        try:
            solver = SaddleSolver(A_p, [C1, C2])
        except ConstraintRankError as err:
            raise ConstraintRankError(f"element {e} slow-mode system: {err}")
        own = space_aux2.columns_of_element(e)
        for col in own:
            xi_loc = np.asarray(space_aux2.basis[patch.dofs, col].todense()).ravel()
            d2 = C2 @ xi_loc
            zeta_loc, _ = solver.solve(None, [np.zeros(C1.shape[0]), d2])
            cols.append(_scatter_columns(grid, patch.dofs, zeta_loc[:, None]))
            elems.append(e)
            modes.append(int(space_aux2.mode[col]))
    return ReducedSpace(sp.hstack(cols, format="csc"), elems, modes, "slow")


def compute_gamma(space1, space2, M):
    """Largest cosine between the two spaces in the L2 inner product.

    M-orthonormalizes both bases, then takes the largest singular value
    of the cross Gram matrix.
    """
    if space1.n_basis == 0 or space2.n_basis == 0:
        return 0.0
    Z1, Z2 = space1.basis, space2.basis
    G1 = (Z1.T @ (M @ Z1)).toarray()
    G2 = (Z2.T @ (M @ Z2)).toarray()
    L1 = sla.cholesky(0.5 * (G1 + G1.T), lower=True)
    L2 = sla.cholesky(0.5 * (G2 + G2.T), lower=True)
    X = (Z1.T @ (M @ Z2)).toarray()
    C = sla.solve_triangular(L1, X, lower=True)
    C = sla.solve_triangular(L2, C.T, lower=True).T
    return float(sla.svdvals(C)[0]) if min(C.shape) else 0.0


class SpaceDiagnostics:
    """Post hoc verification of every construction constraint, recomputed
    from fresh assemblies (nothing cached from the builders)."""

    def __init__(self, gamma, residuals, eig_aux, eig_aux2, gamma_warning):
        self.gamma = gamma
        self.residuals = residuals  # dict family -> max relative residual
        self.eig_aux = eig_aux
        self.eig_aux2 = eig_aux2
        self.gamma_warning = gamma_warning

    def max_residual(self):
        return max(self.residuals.values()) if self.residuals else 0.0


def space_diagnostics(grid, kappa, aux, cem, aux2, slow, ktilde_variant="h2"):
    S_full = assembly.assemble_mass(grid, ktilde_field(grid, kappa, ktilde_variant), full=True)
    keep = grid.node_of_dof
    S = S_full[keep][:, keep]
    M = assembly.assemble_mass(grid)

    res = {}
    Z1 = aux.basis
    G = (Z1.T @ (S @ Z1)).toarray()
    res["aux_orthonormality"] = float(np.abs(G - np.eye(G.shape[0])).max())

    rng = np.random.default_rng(1234)
    u = rng.standard_normal(grid.n_dofs)
    pu = project_onto_aux(aux, S, u)
    ppu = project_onto_aux(aux, S, pu)
    res["projection_idempotency"] = float(
        np.linalg.norm(ppu - pu) / max(np.linalg.norm(pu), 1e-300)
    )

    if cem is not None and cem.n_basis:
        R = (Z1.T @ (S @ cem.basis)).toarray() - (Z1.T @ (S @ Z1)).toarray()
        res["cem_constraint"] = float(np.abs(R).max())
    if slow is not None and slow.n_basis:
        res["slow_aux_orthogonality"] = float(np.abs((Z1.T @ (S @ slow.basis)).toarray()).max())
        Z2 = aux2.basis
        R = (Z2.T @ (M @ slow.basis)).toarray() - (Z2.T @ (M @ Z2)).toarray()
        res["slow_l2_match"] = float(np.abs(R).max())
    if aux2 is not None and aux2.n_basis:
        Z2 = aux2.basis
        res["aux2_orthonormality"] = float(
            np.abs((Z2.T @ (M @ Z2)).toarray() - np.eye(Z2.shape[1])).max()
        )
        res["aux2_in_kernel"] = float(np.abs((Z1.T @ (S @ Z2)).toarray()).max())

    gamma = compute_gamma(cem, slow, M) if (cem is not None and slow is not None) else 0.0
    return SpaceDiagnostics(
        gamma,
        res,
        aux.eigenvalues,
        aux2.eigenvalues if aux2 is not None else None,
        gamma >= 1.0 - 1e-8,
    )


def build_space_pair(grid, kappa, n_fast_modes=3, n_slow_modes=1, layers=2,
                     ktilde_variant="h2"):
    """One-call construction of the implicit/explicit space pair.

    Returns (cem, slow, aux, aux2); assemblies are shared across the four
    builders.
    """
    ops = _operators(grid, kappa, ktilde_variant, None)
    aux = build_aux_space(grid, kappa, n_fast_modes, ktilde_variant, operators=ops)
    cem = build_cem_basis(grid, kappa, aux, layers, ktilde_variant, operators=ops)
    if n_slow_modes > 0:
        aux2 = build_aux2_space(grid, kappa, aux, n_slow_modes, operators=ops,
                                ktilde_variant=ktilde_variant)
        slow = build_v2_basis(grid, kappa, aux, aux2, layers, ktilde_variant, operators=ops)
    else:
        aux2 = empty_space(grid, "aux2")
        slow = empty_space(grid, "slow")
    return cem, slow, aux, aux2


def export_basis(space, path):
    """Plain-text export: provenance header, then the dense basis matrix."""
    with open(path, "w") as f:
        f.write(f"kind={space.kind} ndofs={space.n_dofs} nbasis={space.n_basis}\n")
        f.write("elem " + " ".join(str(int(e)) for e in space.elem) + "\n")
        f.write("mode " + " ".join(str(int(m)) for m in space.mode) + "\n")
        Z = space.dense()
        for row in Z:
            f.write(" ".join("%.17g" % v for v in row) + "\n")

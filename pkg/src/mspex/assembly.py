"""Finite element assembly on the fine grid (bilinear quads, 2x2 Gauss).

Coefficient vectors ("fields") are plain numpy arrays over interior dofs;
cell data (kappa, sources, reaction parameters) are arrays of one value
per fine cell.  Matrices are scipy CSR, restricted to interior dofs
unless full=True asks for the boundary-included operator.
"""

import numpy as np
import scipy.sparse as sp

from . import kernels
from .exceptions import ConfigError

# reference square [-1,1]^2, corners ordered bl, br, tr, tl
_CORNERS = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])
_GP = 1.0 / np.sqrt(3.0)
_QPOINTS = np.array([(-_GP, -_GP), (_GP, -_GP), (_GP, _GP), (-_GP, _GP)])

N_QUAD = 4


def _shape_values():
    phi = np.empty((4, 4))
    dxi = np.empty((4, 4))
    deta = np.empty((4, 4))
    for q, (xi, eta) in enumerate(_QPOINTS):
        for i, (xc, yc) in enumerate(_CORNERS):
            phi[q, i] = 0.25 * (1 + xi * xc) * (1 + eta * yc)
            dxi[q, i] = 0.25 * xc * (1 + eta * yc)
            deta[q, i] = 0.25 * yc * (1 + xi * xc)
    return phi, dxi, deta


PHI, _DXI, _DETA = _shape_values()


def quad_local_mass(h):
    """mass_q[q,i,j]: contribution of quad point q to the local mass matrix."""
    jac = h * h / 4.0
    return np.einsum("qi,qj->qij", PHI, PHI) * jac


def quad_local_stiffness():
    """stiff_q[q,i,j]: local stiffness contributions (independent of h)."""
    return np.einsum("qi,qj->qij", _DXI, _DXI) + np.einsum("qi,qj->qij", _DETA, _DETA)


def quad_local_vector(h):
    return PHI * (h * h / 4.0)


def _to_matrix(grid, cell_data, full):
    """Scatter per-cell 4x4 blocks into a CSR matrix."""
    n = grid.n_nodes
    rows = np.repeat(grid.cell_nodes, 4, axis=1).ravel()
    cols = np.tile(grid.cell_nodes, (1, 4)).ravel()
    A = sp.coo_matrix((cell_data.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.eliminate_zeros()
    if full:
        return A
    keep = grid.node_of_dof
    return A[keep][:, keep]


def expand_to_nodes(grid, u):
    """Interior dof vector -> full node vector with zero Dirichlet boundary."""
    out = np.zeros(grid.n_nodes)
    out[grid.node_of_dof] = u
    return out


def field_quad_values(grid, u):
    """Evaluate the Q1 interpolant of an interior field at all quad points."""
    return kernels.gather_quad(
        expand_to_nodes(grid, u), grid.cell_nodes, PHI
    )


def cellwise_quad_values(cell_field):
    """Broadcast a per-cell constant to the (n_cells, nq) quad layout."""
    return np.repeat(np.asarray(cell_field, dtype=float)[:, None], N_QUAD, axis=1)


def integrate_quad(grid, values_cq):
    """Integrate values given at quad points over the whole domain."""
    return kernels.cell_integral(np.ascontiguousarray(values_cq), grid.h * grid.h / 4.0)


def assemble_mass(grid, weight=None, full=False):
    """Mass matrix, optionally with a positive cellwise-constant weight."""
    if weight is None:
        coeff = np.ones((grid.n_cells, N_QUAD))
    else:
        weight = np.asarray(weight, dtype=float)
        bad = np.flatnonzero(weight <= 0)
        if bad.size:
            c = int(bad[0])
            raise ConfigError(
                f"mass weight must be positive; cell {c} (cx={c % grid.nf}, "
                f"cy={c // grid.nf}) has value {weight[c]}"
            )
        coeff = cellwise_quad_values(weight)
    data = kernels.cell_matrices(coeff, quad_local_mass(grid.h))
    return _to_matrix(grid, data, full)


def assemble_stiffness(grid, kappa, alpha_state=None, full=False):
    """Diffusion stiffness with cellwise kappa, optionally scaled by alpha(u).

    alpha_state, when given, is a pair (u, alpha): u an interior field,
    alpha a scalar callable applied at quad points of the Q1 interpolant.
    """
    kappa = np.asarray(kappa, dtype=float)
    bad = np.flatnonzero(kappa <= 0)
    if bad.size:
        c = int(bad[0])
        raise ConfigError(f"kappa must be positive everywhere; cell {c} has {kappa[c]}")
    coeff = cellwise_quad_values(kappa)
    if alpha_state is not None:
        u, alpha = alpha_state
        a_vals = alpha(field_quad_values(grid, u))
        if np.min(a_vals) <= 0:
            raise ConfigError(
                "diffusion nonlinearity alpha(u) <= 0 at a quadrature point; "
                f"min value {np.min(a_vals)}"
            )
        coeff = coeff * a_vals
    data = kernels.cell_matrices(np.ascontiguousarray(coeff), quad_local_stiffness())
    return _to_matrix(grid, data, full)


def assemble_reaction(grid, reaction, u, full=False):
    """Reaction vector (g(u), phi_i) and its Jacobian matrix.

    `reaction` provides value(u_cq) and deriv(u_cq) on (n_cells, nq)
    arrays of solution values at quad points.
    """
    u_cq = field_quad_values(grid, u)
    g_vals = np.ascontiguousarray(reaction.value(u_cq), dtype=float)
    gp_vals = np.ascontiguousarray(reaction.deriv(u_cq), dtype=float)

    vec_full = kernels.scatter_vector(
        kernels.cell_vectors(g_vals, quad_local_vector(grid.h)),
        grid.cell_nodes,
        grid.n_nodes,
    )
    jac_data = kernels.cell_matrices(gp_vals, quad_local_mass(grid.h))
    jac = _to_matrix(grid, jac_data, full)
    if full:
        return vec_full, jac
    return vec_full[grid.node_of_dof], jac


def assemble_load(grid, g0, full=False):
    """Load vector (g0, phi_i) for a cellwise-constant source."""
    coeff = cellwise_quad_values(g0)
    vec = kernels.scatter_vector(
        kernels.cell_vectors(coeff, quad_local_vector(grid.h)),
        grid.cell_nodes,
        grid.n_nodes,
    )
    if full:
        return vec
    return vec[grid.node_of_dof]


def symmetry_defect(A):
    """max |A - A^T| entry, for the symmetry probes."""
    d = (A - A.T).tocoo()
    return float(np.abs(d.data).max()) if d.nnz else 0.0


def restrict_to(A_full, grid, nodes=None):
    """Restrict a full-node matrix to interior dofs (or to given nodes)."""
    keep = grid.node_of_dof if nodes is None else nodes
    return A_full[keep][:, keep]

"""Nested structured grids on the unit square.

The fine grid has nf x nf bilinear quad cells, the coarse grid nc x nc
blocks of ratio x ratio fine cells each.  Homogeneous Dirichlet boundary:
only nodes strictly inside the square carry degrees of freedom.

Index conventions (used everywhere downstream):
  fine node   (ix, iy) -> iy * (nf + 1) + ix
  fine cell   (cx, cy) -> cy * nf + cx
  coarse elem (CX, CY) -> CY * nc + CX
Cell corner order is counterclockwise: bottom-left, bottom-right,
top-right, top-left.
"""

import numpy as np

from .exceptions import ConfigError


class GridHierarchy:
    """Immutable bundle of fine/coarse incidence and dof maps."""

    def __init__(self, nc, nf):
        if nf % nc != 0:
            raise ConfigError(
                f"fine cells per side nf={nf} must be a multiple of coarse cells per side nc={nc}"
            )
        ratio = nf // nc
        if ratio < 2:
            raise ConfigError(
                f"refinement ratio nf/nc must be >= 2, got nf={nf}, nc={nc}"
            )
        self.nc = nc
        self.nf = nf
        self.ratio = ratio
        self.h = 1.0 / nf
        self.H = 1.0 / nc

        npts = nf + 1
        self.n_nodes = npts * npts
        self.n_cells = nf * nf
        self.n_coarse = nc * nc

        ix = np.arange(npts)
        self.node_x = np.tile(ix, npts) * self.h
        self.node_y = np.repeat(ix, npts) * self.h

        # interior dof numbering, boundary nodes get -1
        gx = np.tile(ix, npts)
        gy = np.repeat(ix, npts)
        interior = (gx > 0) & (gx < nf) & (gy > 0) & (gy < nf)
        self.dof_of_node = np.full(self.n_nodes, -1, dtype=np.int64)
        self.dof_of_node[interior] = np.arange(interior.sum())
        self.node_of_dof = np.flatnonzero(interior).astype(np.int64)
        self.n_dofs = int(interior.sum())

        # cell -> corner nodes (bl, br, tr, tl)
        cx = np.tile(np.arange(nf), nf)
        cy = np.repeat(np.arange(nf), nf)
        bl = cy * npts + cx
        self.cell_nodes = np.stack(
            [bl, bl + 1, bl + npts + 1, bl + npts], axis=1
        ).astype(np.int64)

        # fine cell -> owning coarse element
        self.coarse_of_cell = ((cy // ratio) * nc + (cx // ratio)).astype(np.int64)

        # coarse element -> fine cells / fine nodes
        self.cells_of_coarse = np.empty((self.n_coarse, ratio * ratio), dtype=np.int64)
        self.nodes_of_coarse = np.empty(
            (self.n_coarse, (ratio + 1) * (ratio + 1)), dtype=np.int64
        )
        for e in range(self.n_coarse):
            ex, ey = e % nc, e // nc
            lx = np.arange(ex * ratio, (ex + 1) * ratio)
            ly = np.arange(ey * ratio, (ey + 1) * ratio)
            self.cells_of_coarse[e] = (ly[:, None] * nf + lx[None, :]).ravel()
            nxr = np.arange(ex * ratio, (ex + 1) * ratio + 1)
            nyr = np.arange(ey * ratio, (ey + 1) * ratio + 1)
            self.nodes_of_coarse[e] = (nyr[:, None] * npts + nxr[None, :]).ravel()

        for a in (
            self.node_x, self.node_y, self.dof_of_node, self.node_of_dof,
            self.cell_nodes, self.coarse_of_cell, self.cells_of_coarse,
            self.nodes_of_coarse,
        ):
            a.setflags(write=False)

    def coarse_interior_nodes(self, e):
        """Fine nodes strictly inside coarse element e (zero trace on its boundary)."""
        ex, ey = e % self.nc, e // self.nc
        r, npts = self.ratio, self.nf + 1
        nx = np.arange(ex * r + 1, (ex + 1) * r)
        ny = np.arange(ey * r + 1, (ey + 1) * r)
        return (ny[:, None] * npts + nx[None, :]).ravel()

    def coarse_interior_dofs(self, e):
        return self.dof_of_node[self.coarse_interior_nodes(e)]

    def __repr__(self):
        return f"GridHierarchy(nc={self.nc}, nf={self.nf})"


class Patch:
    """Oversampled neighborhood of one coarse element, clipped to the domain.

    Local dofs are the fine nodes strictly inside the patch rectangle;
    nodes on the patch boundary (including any part on the domain
    boundary) carry no local dof.
    """

    def __init__(self, grid, center, layers):
        if not 0 <= center < grid.n_coarse:
            raise ConfigError(
                f"coarse element index {center} out of range [0, {grid.n_coarse})"
            )
        if layers < 0:
            raise ConfigError(f"oversampling layers must be >= 0, got {layers}")
        self.center = center
        self.layers = layers

        nc, nf, r = grid.nc, grid.nf, grid.ratio
        ex, ey = center % nc, center // nc
        self.cx0 = max(0, ex - layers)
        self.cx1 = min(nc - 1, ex + layers)
        self.cy0 = max(0, ey - layers)
        self.cy1 = min(nc - 1, ey + layers)

        exr = np.arange(self.cx0, self.cx1 + 1)
        eyr = np.arange(self.cy0, self.cy1 + 1)
        self.coarse_elems = (eyr[:, None] * nc + exr[None, :]).ravel()

        fx = np.arange(self.cx0 * r, (self.cx1 + 1) * r)
        fy = np.arange(self.cy0 * r, (self.cy1 + 1) * r)
        self.cells = (fy[:, None] * nf + fx[None, :]).ravel()

        npts = nf + 1
        nx = np.arange(self.cx0 * r + 1, (self.cx1 + 1) * r)
        ny = np.arange(self.cy0 * r + 1, (self.cy1 + 1) * r)
        self.nodes = (ny[:, None] * npts + nx[None, :]).ravel()
        self.dofs = grid.dof_of_node[self.nodes]
        assert (self.dofs >= 0).all()
        self.n_local = self.nodes.size

        self._local_of_node = {int(n): i for i, n in enumerate(self.nodes)}

    def local_index(self, nodes):
        """Global fine-node ids -> local dof indices (-1 if not a local dof)."""
        nodes = np.atleast_1d(nodes)
        return np.array(
            [self._local_of_node.get(int(n), -1) for n in nodes], dtype=np.int64
        )

    def contains_coarse(self, e):
        return bool(np.isin(e, self.coarse_elems))

    def __repr__(self):
        return (
            f"Patch(center={self.center}, layers={self.layers}, "
            f"elems={self.coarse_elems.size}, ndof={self.n_local})"
        )


def build_grids(nc, nf):
    """Build the nested coarse/fine hierarchy (nc, nf cells per side)."""
    return GridHierarchy(nc, nf)


def oversample(grid, center, layers):
    """Ring-`layers` coarse neighborhood of element `center`, clipped to the domain."""
    return Patch(grid, center, layers)

"""Plain-text matrix files.

Format: first line "rows cols", then one line per row of space-separated
decimal values.  Used for coefficient fields, sources, snapshots, and
basis export.  Cell fields are written with row r holding the cells of
the r-th cell row from the bottom; node fields likewise by node rows.
"""

import numpy as np

from .exceptions import ConfigError


def write_matrix(path, arr, fmt="%.17g"):
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    with open(path, "w") as f:
        f.write(f"{arr.shape[0]} {arr.shape[1]}\n")
        for row in arr:
            f.write(" ".join(fmt % v for v in row) + "\n")


def read_matrix(path):
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ConfigError(f"{path}: header must be 'rows cols', got {header!r}")
        try:
            rows, cols = int(header[0]), int(header[1])
        except ValueError:
            raise ConfigError(f"{path}: non-integer header {header!r}")
        out = np.empty((rows, cols))
        for r in range(rows):
            line = f.readline()
            if not line:
                raise ConfigError(f"{path}: expected {rows} rows, file ends at row {r}")
            vals = line.split()
            if len(vals) != cols:
                raise ConfigError(
                    f"{path}: line {r + 2} has {len(vals)} values, expected {cols}"
                )
            try:
                out[r] = [float(v) for v in vals]
            except ValueError:
                raise ConfigError(f"{path}: line {r + 2} contains a non-numeric value")
    return out


def cellfield_to_grid(field, nf):
    """Flat cell field (cy*nf + cx indexing) -> (nf, nf) array, row = cy."""
    return np.asarray(field, dtype=float).reshape(nf, nf)


def grid_to_cellfield(arr):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"cell field must be square, got shape {arr.shape}")
    return arr.ravel()


def write_node_field(path, grid, u_interior):
    """Write an interior field as (nf+1) x (nf+1) nodal values (boundary zeros)."""
    full = np.zeros(grid.n_nodes)
    full[grid.node_of_dof] = u_interior
    write_matrix(path, full.reshape(grid.nf + 1, grid.nf + 1))

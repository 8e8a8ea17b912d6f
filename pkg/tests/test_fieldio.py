import numpy as np
import pytest

from mspex import ConfigError, build_grids
from mspex import fieldio


def test_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((5, 7))
    path = tmp_path / "m.txt"
    fieldio.write_matrix(path, arr)
    back = fieldio.read_matrix(path)
    assert (back == arr).all()  # %.17g preserves doubles exactly


def test_header_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("5\n1 2 3\n")
    with pytest.raises(ConfigError):
        fieldio.read_matrix(path)
    path.write_text("a b\n")
    with pytest.raises(ConfigError):
        fieldio.read_matrix(path)


def test_truncated_file(tmp_path):
    path = tmp_path / "short.txt"
    path.write_text("3 2\n1 2\n3 4\n")
    with pytest.raises(ConfigError) as err:
        fieldio.read_matrix(path)
    assert "row 2" in str(err.value)


def test_non_numeric(tmp_path):
    path = tmp_path / "nan.txt"
    path.write_text("1 2\n1 x\n")
    with pytest.raises(ConfigError) as err:
        fieldio.read_matrix(path)
    assert "line 2" in str(err.value)


def test_cellfield_grid_conversion():
    nf = 4
    field = np.arange(nf * nf, dtype=float)
    arr = fieldio.cellfield_to_grid(field, nf)
    assert arr[1, 2] == 1 * nf + 2  # row = cy, col = cx
    assert (fieldio.grid_to_cellfield(arr) == field).all()
    with pytest.raises(ConfigError):
        fieldio.grid_to_cellfield(np.ones((2, 3)))


def test_write_node_field(tmp_path):
    g = build_grids(2, 4)
    u = np.arange(g.n_dofs, dtype=float) + 1.0
    path = tmp_path / "u.txt"
    fieldio.write_node_field(path, g, u)
    arr = fieldio.read_matrix(path)
    assert arr.shape == (g.nf + 1, g.nf + 1)
    assert (arr[0, :] == 0).all() and (arr[:, 0] == 0).all()
    assert arr[1, 1] == 1.0  # first interior node

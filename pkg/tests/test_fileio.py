import warnings

import numpy as np
import pytest

from nudf import fixtures as fx
from nudf.errors import DegenerateTriangleWarning, EmptyInputError, FormatError
from nudf.fileio import (load_mesh, load_point_cloud, ply_binary_size, save_mesh,
                         save_point_cloud)
from nudf.geometry import PointCloud, TriangleMesh

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 0 1 0
v 1 1 0
v 0 0 1
v 1 0 1
v 0 1 1
v 1 1 1
f 1 3 2
f 2 3 4
f 5 6 7
f 6 8 7
f 1 2 5
f 2 6 5
f 3 7 4
f 4 7 8
f 1 5 3
f 3 5 7
f 2 4 6
f 4 8 6
"""


def test_unit_cube_obj(tmp_path):
    p = tmp_path / "unit-cube.obj"
    p.write_text(CUBE_OBJ)
    m = load_mesh(p)
    assert m.n_vertices == 8 and m.n_triangles == 12


def test_binary_and_ascii_ply_identical(tmp_path):
    m = fx.icosphere(20.0, 3)
    save_mesh(m, tmp_path / "a.ply", "ply-ascii")
    save_mesh(m, tmp_path / "b.ply", "ply-binary")
    a, b = load_mesh(tmp_path / "a.ply"), load_mesh(tmp_path / "b.ply")
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)


def test_zero_area_triangle_dropped_with_count(tmp_path):
    p = tmp_path / "deg.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n")
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        m = load_mesh(p)
    counts = [x.message.count for x in w if isinstance(x.message, DegenerateTriangleWarning)]
    assert counts == [1]
    assert m.n_triangles == 1


@pytest.mark.parametrize("fmt", ["ply-ascii", "ply-binary", "obj"])
@pytest.mark.parametrize("name", ["torus", "hemisphere", "appendage"])
def test_round_trip(tmp_path, fmt, name):
    m = fx.get_fixture(name)
    path = tmp_path / ("m.obj" if fmt == "obj" else "m.ply")
    save_mesh(m, path, fmt)
    r = load_mesh(path)
    assert np.array_equal(r.triangles, m.triangles)
    assert np.array_equal(r.vertices, m.vertices.astype(np.float32).astype(np.float64))


def test_empty_path_errors():
    with pytest.raises(OSError):
        save_mesh(fx.unit_cube(), "")


def test_binary_size_formula(tmp_path):
    m = fx.icosphere(1.0, 6)  # 40962 vertices
    big = TriangleMesh(np.concatenate([m.vertices, m.vertices + 3, m.vertices + 6]),
                       np.concatenate([m.triangles, m.triangles + m.n_vertices,
                                       m.triangles + 2 * m.n_vertices]))
    assert big.n_vertices > 100_000
    path = tmp_path / "big.ply"
    save_mesh(big, path, "ply-binary")
    header = path.read_bytes().split(b"end_header\n")[0] + b"end_header\n"
    expect = len(header) + 12 * big.n_vertices + 13 * big.n_triangles
    assert path.stat().st_size == expect == ply_binary_size(big.n_vertices, big.n_triangles)


def test_missing_and_empty_inputs(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mesh(tmp_path / "nope.ply")
    p = tmp_path / "empty.obj"
    p.write_text("v 0 0 0\n")
    with pytest.raises(EmptyInputError):
        load_mesh(p)


def test_format_error_names_offset(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 10\n"
                  b"property float x\nproperty float y\nproperty float z\nend_header\n" + b"\0" * 20)
    with pytest.raises(FormatError, match="byte offset"):
        load_mesh(p)


def test_point_cloud_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    n = rng.normal(size=(50, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    c = PointCloud(rng.normal(size=(50, 3)), n, {"residual": rng.random(50)})
    save_point_cloud(c, tmp_path / "c.ply")
    r = load_point_cloud(tmp_path / "c.ply")
    assert np.array_equal(r.points, c.points.astype(np.float32))
    assert np.allclose(r.normals, c.normals, atol=1e-6)
    assert np.array_equal(r.attributes["residual"], c.attributes["residual"].astype(np.float32))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from nudf import fixtures as fx
from nudf.errors import EmptyInputError
from nudf.geometry import (Box, Normalization, TriangleMesh, area_weighted_sample, boundary_loops,
                           clean_mesh, euler_characteristic, face_components,
                           non_manifold_edge_count, orient_consistently)


def test_unit_square_per_triangle_counts_binomial():
    s = area_weighted_sample(fx.unit_square(), 100_000, 0)
    counts = np.bincount(s.triangle_ids, minlength=2)
    sigma = np.sqrt(100_000 * 0.25)
    assert np.all(np.abs(counts - 50_000) <= 3 * sigma)


def test_single_triangle_samples_inside_with_face_normal():
    m = fx.single_triangle()
    s = area_weighted_sample(m, 3, 7)
    assert len(s) == 3
    assert np.all(s.barycentric >= 0) and np.allclose(s.barycentric.sum(1), 1.0)
    assert np.all(s.points[:, 2] == 0)
    assert np.allclose(s.points[:, 0] + s.points[:, 1], 1 - s.barycentric[:, 0])
    assert np.allclose(s.normals, [0, 0, 1])


def test_sampling_deterministic(sphere20):
    a = area_weighted_sample(sphere20, 1000, 42)
    b = area_weighted_sample(sphere20, 1000, 42)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.normals, b.normals)


@pytest.mark.parametrize("name", ["torus", "appendage", "capsule"])
def test_sampling_chi_square_against_areas(name):
    m = fx.get_fixture(name)
    n = 100_000
    s = area_weighted_sample(m, n, 3)
    # pool triangles into 50 bins of similar total area so expected counts are large
    areas = m.face_areas()
    order = np.argsort(np.arange(len(areas)))
    bins = np.minimum((np.cumsum(areas[order]) / areas.sum() * 50).astype(int), 49)
    tri_bin = np.empty(len(areas), dtype=int)
    tri_bin[order] = bins
    observed = np.bincount(tri_bin[s.triangle_ids], minlength=50)
    expected = np.bincount(tri_bin, weights=areas, minlength=50) / areas.sum() * n
    assert stats.chisquare(observed, expected).pvalue > 0.001


def test_sample_invariants(sphere20):
    s = area_weighted_sample(sphere20, 5000, 1)
    assert np.allclose(np.linalg.norm(s.normals, axis=1), 1.0, atol=1e-6)
    corners = sphere20.vertices[sphere20.triangles[s.triangle_ids]]
    assert np.allclose(np.einsum("nk,nkd->nd", s.barycentric, corners), s.points)
    # outward on a sphere
    assert np.all(np.einsum("ij,ij->i", s.normals, s.points) > 0)


def test_empty_mesh_sampling_errors():
    with pytest.raises(EmptyInputError):
        area_weighted_sample(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), int)), 10, 0)


def test_clean_mesh_drops_zero_area():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]]
    m, dropped = clean_mesh(v, [(0, 1, 2), (0, 1, 3)])
    assert dropped == 1 and m.n_triangles == 1 and m.n_vertices == 3


def test_orient_consistently_repairs_flipped_face():
    m = fx.icosphere(1.0, 1)
    t = m.triangles.copy()
    t[5] = t[5][::-1]
    fixed = orient_consistently(t)
    vol = np.einsum("ij,ij->i", m.vertices[fixed[:, 0]],
                    np.cross(m.vertices[fixed[:, 1]], m.vertices[fixed[:, 2]]))
    assert np.all(vol > 0) or np.all(vol < 0)


@pytest.mark.parametrize("name,chi,loops", [
    ("sphere", 2, 0), ("torus", 0, 0), ("capsule", 2, 0),
    ("hemisphere", 1, 1), ("appendage", 1, 1), ("unit_cube", 2, 0),
])
def test_fixture_topology(name, chi, loops):
    m = fx.get_fixture(name)
    assert euler_characteristic(m) == chi
    assert len(boundary_loops(m.triangles)) == loops
    assert non_manifold_edge_count(m.triangles) == 0
    assert face_components(m.triangles)[0] == 1


def test_punctured_icosphere_has_one_small_hole():
    m = fx.punctured_icosphere()
    assert len(boundary_loops(m.triangles)) == 1


def test_unknown_fixture():
    with pytest.raises(KeyError):
        fx.get_fixture("nope")


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 100), st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_normalization_round_trip(scale, center):
    norm = Normalization(np.array(center), scale)
    p = np.random.default_rng(0).normal(size=(20, 3)) * 10
    assert np.allclose(norm.to_world(norm.to_normalized(p)), p, atol=1e-9)
    back = Normalization.from_matrix(norm.matrix())
    assert np.allclose(back.center, norm.center) and np.isclose(back.scale, norm.scale)


def test_normalization_fits_unit_cube(sphere20):
    norm = Normalization.fit(fx.appendage())
    v = norm.to_normalized(fx.appendage().vertices)
    assert np.abs(v).max() == pytest.approx(1 / 1.1)


def test_box_clamp_and_contains():
    b = Box.cube(1.0)
    p = np.array([[2.0, 0, -3], [0.5, 0.5, 0.5]])
    assert np.array_equal(b.contains(p), [False, True])
    assert np.array_equal(b.clamp(p), [[1, 0, -1], [0.5, 0.5, 0.5]])
    assert b.diagonal == pytest.approx(2 * np.sqrt(3))


def test_mesh_is_immutable(sphere20):
    with pytest.raises(ValueError):
        sphere20.vertices[0, 0] = 1.0


def test_split_pinched_bowtie():
    from nudf.geometry import split_pinched_vertices
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0.0]])
    V, T = split_pinched_vertices(v, np.array([[0, 1, 2], [0, 3, 4]]))
    assert len(V) == 6 and np.array_equal(V[5], V[0])
    assert np.array_equal(T, [[0, 1, 2], [5, 3, 4]])


def test_split_pinched_leaves_manifold_mesh():
    from nudf.geometry import split_pinched_vertices
    for m in (fx.icosphere(1.0, 2), fx.hemisphere(), fx.torus()):
        V, T = split_pinched_vertices(m.vertices, m.triangles)
        assert V is m.vertices or np.array_equal(V, m.vertices)
        assert np.array_equal(T, m.triangles)


def test_split_pinched_two_spheres_touching():
    from nudf.geometry import split_pinched_vertices
    a = fx.icosphere(1.0, 1)
    top = int(np.argmax(a.vertices[:, 2]))
    b_v = a.vertices * [1, 1, -1] + [0, 0, 2 * a.vertices[top, 2]]
    b_t = a.triangles[:, ::-1] + a.n_vertices
    # glue the bottom sphere's top vertex to the mirrored sphere's bottom one
    t = np.concatenate([a.triangles, np.where(b_t == top + a.n_vertices, top, b_t)])
    v = np.concatenate([a.vertices, b_v])
    V, T = split_pinched_vertices(v, t)
    m = TriangleMesh(V, T)
    assert euler_characteristic(m) == 4
    assert len(np.unique(T)) == len(np.unique(t)) + 1

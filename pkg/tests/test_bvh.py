import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_distance, brute_ray
from nudf import fixtures as fx
from nudf.bvh import build_index, closest_point_triangle
from nudf.errors import EmptyInputError
from nudf.geometry import TriangleMesh, area_weighted_sample


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


def test_cube_index_reaches_all_triangles():
    idx = build_index(fx.unit_cube())
    assert idx.n_nodes >= 1
    assert sorted(np.concatenate(idx.leaves()).tolist()) == list(range(12))
    assert all(len(l) <= 4 for l in idx.leaves())


def test_node_boxes_contain_descendants():
    m = fx.torus()
    idx = build_index(m)
    bmin, bmax, left, right = idx.node_boxes()
    corners = m.corners()
    # check every leaf's triangles against the boxes on the path to the root
    parent = np.full(idx.n_nodes, -1)
    inner = np.flatnonzero(left >= 0)
    parent[left[inner]] = inner
    parent[right[inner]] = inner
    leaf_nodes = np.flatnonzero(left < 0)
    for node, tris in zip(leaf_nodes, idx.leaves()):
        c = corners[tris].reshape(-1, 3)
        n = node
        while n >= 0:
            assert np.all(c >= bmin[n] - 1e-12) and np.all(c <= bmax[n] + 1e-12)
            n = parent[n]


def test_square_plane_and_corner_distance():
    idx = build_index(fx.unit_square())
    r = idx.unsigned_distance([0.25, 0.25, 0.5])
    assert r.distance == pytest.approx(0.5)
    assert np.allclose(r.closest_point, [0.25, 0.25, 0])
    r = idx.unsigned_distance([2, 2, 0])
    assert r.distance == pytest.approx(np.sqrt(2))
    assert np.allclose(r.closest_point, [1, 1, 0])


def test_two_components_both_reachable():
    a = fx.icosphere(1.0, 2)
    b = fx.icosphere(1.0, 2, center=(10, 0, 0))
    idx = build_index(fx.merge_meshes(a, b))
    assert idx.unsigned_distance([0, 0, 1.5]).distance == pytest.approx(0.5, abs=0.02)
    assert idx.unsigned_distance([10, 0, 1.5]).distance == pytest.approx(0.5, abs=0.02)


def test_empty_mesh_rejected():
    with pytest.raises(EmptyInputError):
        build_index(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), int)))


def test_distance_matches_brute_force():
    m = fx.icosphere(1.0, 3)  # 1280 triangles
    rng = np.random.default_rng(0)
    p = rng.uniform(-1.5, 1.5, size=(10_000, 3))
    d, cp, tri = build_index(m).closest(p)
    assert np.max(np.abs(d - brute_distance(p, m.corners()))) <= 1e-6
    # closest point is at the reported distance and on the reported triangle
    assert np.allclose(np.linalg.norm(p - cp, axis=1), d, atol=1e-6)
    c = m.corners()[tri]
    own = np.array([closest_point_triangle(q, *t) for q, t in zip(cp[:200], c[:200])])
    assert np.allclose(own, cp[:200], atol=1e-9)


def test_batch_equals_single_and_empty():
    m = fx.capsule()
    idx = build_index(m)
    p = np.random.default_rng(1).uniform(-30, 30, size=(50, 3))
    batch = idx.batch_unsigned_distance(p)
    single = [idx.unsigned_distance(q).distance for q in p]
    assert np.array_equal(batch, single)
    assert len(idx.batch_unsigned_distance(np.zeros((0, 3)))) == 0


def test_large_icosphere_spot_check():
    m = fx.icosphere(1.0, 7)  # 327k triangles
    idx = build_index(m)
    p = np.random.default_rng(2).uniform(-1.5, 1.5, size=(200, 3))
    d = idx.batch_unsigned_distance(p)
    # compare against brute force restricted to nearby triangles
    centroids = m.corners().mean(1)
    for q, dq in zip(p[:20], d[:20]):
        near = np.argsort(np.linalg.norm(centroids - q, axis=1))[:2000]
        assert dq == pytest.approx(brute_distance(q[None], m.corners()[near])[0], abs=1e-9)


def test_cube_ray_hits_face():
    idx = build_index(fx.unit_cube())
    t, tri = idx.ray_first_hit([0.5, 0.5, 0.5], [1.0, 0, 0])
    assert t == pytest.approx(0.5)
    assert np.allclose(fx.unit_cube().corners()[tri][:, 0], 1.0)
    assert idx.ray_first_hit([0.5, 0.5, 2.0], [0, 0, 1.0]) is None


def test_axis_rays_through_cube_hit_exactly_once():
    idx = build_index(fx.unit_cube())
    rng = np.random.default_rng(3)
    for axis in range(3):
        o = rng.uniform(0, 1, size=(500, 3))
        o[:, axis] = -1.0
        d = np.zeros((500, 3))
        d[:, axis] = 1
        t, k = idx.cast_rays(o, d, 0.0, np.inf)
        assert np.all(k >= 0) and np.allclose(t, 1.0)


def test_ray_requires_unit_direction():
    with pytest.raises(ValueError):
        build_index(fx.unit_cube()).ray_first_hit([0, 0, 0], [2.0, 0, 0])


def test_rays_match_brute_force():
    m = fx.torus()
    rng = np.random.default_rng(4)
    o = rng.uniform(-35, 35, size=(2000, 3))
    d = rng.normal(size=(2000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    t, _ = build_index(m).cast_rays(o, d, 1e-9, np.inf)
    tb, _ = brute_ray(o, d, m.corners(), 1e-9, np.inf)
    assert np.array_equal(np.isfinite(t), np.isfinite(tb))
    assert np.max(np.abs(t[np.isfinite(t)] - tb[np.isfinite(tb)])) <= 1e-6


def test_surface_samples_have_zero_distance(sphere20):
    s = area_weighted_sample(sphere20, 5000, 0)
    assert build_index(sphere20).batch_unsigned_distance(s.points).max() <= 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    m = fx.capsule()
    R, t = _random_rotation(rng), rng.uniform(-50, 50, 3)
    moved = TriangleMesh(m.vertices @ R.T + t, m.triangles)
    p = rng.uniform(-40, 40, size=(200, 3))
    d0 = build_index(m).batch_unsigned_distance(p)
    d1 = build_index(moved).batch_unsigned_distance(p @ R.T + t)
    assert np.max(np.abs(d0 - d1)) <= 1e-6


def test_build_deterministic():
    a, b = build_index(fx.appendage()), build_index(fx.appendage())
    for x, y in zip(a.node_boxes(), b.node_boxes()):
        assert np.array_equal(x, y)

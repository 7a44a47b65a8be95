import numpy as np
import pytest
from scipy.spatial.distance import pdist

from nudf import fixtures as fx
from nudf.errors import ReconstructionError
from nudf.geometry import (PointCloud, TriangleMesh, area_weighted_sample, boundary_edges, boundary_loops,
                           euler_characteristic, non_manifold_edge_count, split_pinched_vertices)
from nudf.surface import (MeshingConfig, close_small_holes, cull_unsupported, estimate_normals,
                          largest_component, loop_radius, mesh_point_cloud, poisson_disk_indices,
                          poisson_disk_subsample, reconstruct, repair)
from conftest import brute_distance


def _dense(mesh, n=100_000, seed=0):
    return PointCloud(area_weighted_sample(mesh, n, seed).points)


@pytest.fixture(scope="module")
def sphere_cloud(sphere20):
    return _dense(sphere20)


@pytest.fixture(scope="module")
def sphere_sub(sphere_cloud):
    return estimate_normals(poisson_disk_subsample(sphere_cloud, 1000), 16)


@pytest.fixture(scope="module")
def sphere_recon(sphere_sub):
    return reconstruct(sphere_sub)


def test_planar_normals():
    g = np.stack(np.meshgrid(np.arange(20.0), np.arange(20.0)), -1).reshape(-1, 2)
    g += np.random.default_rng(0).uniform(-0.2, 0.2, g.shape)
    cloud = estimate_normals(PointCloud(np.c_[g, np.zeros(len(g))]), 8)
    assert np.allclose(np.abs(cloud.normals[:, 2]), 1)
    assert len(np.unique(np.sign(cloud.normals[:, 2]))) == 1


def test_sphere_normals_radial(sphere_sub):
    radial = sphere_sub.points / np.linalg.norm(sphere_sub.points, axis=1, keepdims=True)
    cos = np.einsum("ij,ij->i", sphere_sub.normals, radial)
    assert np.mean(np.abs(cos) >= np.cos(np.radians(10))) >= 0.99
    # one consistent sign, and outward by the orientation rule
    assert np.all(cos > 0)


def test_two_clusters_each_consistent(sphere_cloud):
    p = sphere_cloud.points[:5000]
    cloud = estimate_normals(PointCloud(np.concatenate([p, p + 100.0])), 16)
    radial = p / np.linalg.norm(p, axis=1, keepdims=True)
    for part in (cloud.normals[:5000], cloud.normals[5000:]):
        cos = np.einsum("ij,ij->i", part, radial)
        assert np.mean(cos > 0) >= 0.99 or np.mean(cos < 0) >= 0.99


def test_normals_need_k_plus_one_points():
    with pytest.raises(ValueError):
        estimate_normals(PointCloud(np.random.default_rng(0).normal(size=(16, 3))), 16)


def test_poisson_identity_and_subset(sphere_cloud):
    p = sphere_cloud.points[:500]
    assert np.array_equal(poisson_disk_indices(p, 500), np.arange(500))
    sub = poisson_disk_subsample(sphere_cloud, 1000)
    assert len(sub) == 1000
    idx = poisson_disk_indices(sphere_cloud.points, 1000)
    assert np.array_equal(sub.points, sphere_cloud.points[idx])
    assert len(np.unique(idx)) == 1000


def test_poisson_beats_random_subset(sphere_cloud):
    pd_min = pdist(poisson_disk_subsample(sphere_cloud, 1000).points).min()
    rnd = np.random.default_rng(0).choice(len(sphere_cloud), 1000, replace=False)
    assert pd_min > pdist(sphere_cloud.points[rnd]).min()


def test_poisson_target_too_large():
    with pytest.raises(ValueError):
        poisson_disk_indices(np.zeros((10, 3)), 11)


def test_planar_grid_single_patch():
    g = np.stack(np.meshgrid(np.arange(15.0), np.arange(15.0)), -1).reshape(-1, 2)
    g += np.random.default_rng(1).uniform(-0.05, 0.05, g.shape)
    pts = np.c_[g, np.zeros(len(g))]
    m = reconstruct(PointCloud(pts, normals=np.tile([0.0, 0, 1], (len(pts), 1))))
    assert len(boundary_loops(m.triangles)) == 1
    assert non_manifold_edge_count(m.triangles) == 0
    assert euler_characteristic(m) == 1


def test_sphere_reconstruction_closed(sphere_sub, sphere_recon):
    m = sphere_recon
    assert euler_characteristic(m) == 2
    assert len(boundary_edges(m.triangles)) == 0
    assert non_manifold_edge_count(m.triangles) == 0
    # vertices are input points exactly
    inp = {tuple(r) for r in sphere_sub.points.tolist()}
    assert all(tuple(r) in inp for r in m.vertices.tolist())


def test_reconstruction_radius_too_small(sphere_sub):
    with pytest.raises(ReconstructionError, match="radi"):
        reconstruct(sphere_sub, MeshingConfig(bpa_radii=[1e-3]))


def test_reconstruction_needs_normals(sphere_cloud):
    with pytest.raises(ValueError):
        reconstruct(PointCloud(sphere_cloud.points[:100]))


def test_cull_trivial_cases(sphere20):
    assert cull_unsupported(sphere20, np.zeros((0, 3)), 1.0).is_empty()
    assert cull_unsupported(sphere20, sphere20.vertices, np.inf) is sphere20


def test_cull_with_own_cloud_removes_nothing(sphere_cloud, sphere_recon):
    # every triangle of the reconstruction is within its circumradius of
    # its own vertices, which are cloud points
    gap = np.linalg.norm(sphere_recon.corners() - sphere_recon.corners().mean(1, keepdims=True), axis=2).max()
    assert cull_unsupported(sphere_recon, sphere_cloud.points, gap * 1.01).n_triangles == sphere_recon.n_triangles
    assert cull_unsupported(sphere_recon, sphere_cloud.points, 0.35).n_triangles == sphere_recon.n_triangles


def test_cull_matches_brute_force():
    mesh = fx.icosphere(1.0, 2)
    support = np.random.default_rng(3).normal(size=(40, 3)) * 1.3
    radius = 0.15
    keep = np.array([brute_distance(support, c[None]).min() <= radius for c in mesh.corners()])
    out = cull_unsupported(mesh, support, radius)
    assert out.n_triangles == keep.sum()
    assert np.allclose(np.sort(out.face_areas()), np.sort(mesh.face_areas()[keep]))


def test_close_puncture():
    m = fx.punctured_icosphere()
    loops = boundary_loops(m.triangles)
    assert len(loops) == 1 and loop_radius(m.vertices, loops[0]) < 3.5
    out = close_small_holes(m, 3.5)
    assert len(boundary_edges(out.triangles)) == 0
    assert non_manifold_edge_count(out.triangles) == 0
    assert euler_characteristic(out) == 2
    assert out.n_triangles >= m.n_triangles


def test_close_keeps_large_rim(hemisphere20):
    out = close_small_holes(hemisphere20, 3.5)
    assert out is hemisphere20
    assert len(boundary_loops(out.triangles)) == 1


def test_close_watertight_unchanged(sphere20):
    assert close_small_holes(sphere20, 3.5) is sphere20


def test_largest_component_cases(sphere20):
    assert largest_component(sphere20) is sphere20
    cube = fx.unit_cube()
    both = fx.merge_meshes(TriangleMesh(cube.vertices * 0.1 + 50, cube.triangles), sphere20)
    assert np.isclose(largest_component(both).area(), sphere20.area())
    a = fx.unit_cube()
    b = TriangleMesh(a.vertices + 5.0, a.triangles)
    two = fx.merge_meshes(a, b)
    assert np.allclose(largest_component(two).vertices, a.vertices)
    two = fx.merge_meshes(b, a)
    assert np.allclose(largest_component(two).vertices, b.vertices)


def test_repair_idempotent(sphere_cloud, sphere_recon):
    # drop a few faces to create holes, plus a stray island
    m = sphere_recon.submesh(np.arange(sphere_recon.n_triangles) % 97 != 0)
    cfg = MeshingConfig()
    once = repair(m, sphere_cloud.points, cfg)
    twice = repair(once, sphere_cloud.points, cfg)
    assert np.array_equal(once.vertices, twice.vertices)
    assert np.array_equal(once.triangles, twice.triangles)


def test_hemisphere_keeps_open_rim(hemisphere20):
    mesh = mesh_point_cloud(_dense(hemisphere20))
    loops = boundary_loops(mesh.triangles)
    assert len(loops) == 1
    rim = 2 * np.pi * loop_radius(mesh.vertices, loops[0])
    assert abs(rim - 2 * np.pi * 20.0) <= 0.1 * 2 * np.pi * 20.0
    assert non_manifold_edge_count(mesh.triangles) == 0
    assert len(split_pinched_vertices(mesh.vertices, mesh.triangles)[0]) == mesh.n_vertices


def test_torus_chain_genus_one():
    mesh = mesh_point_cloud(_dense(fx.torus()))
    assert euler_characteristic(mesh) == 0
    assert len(boundary_edges(mesh.triangles)) == 0


def test_config_validation():
    with pytest.raises(ValueError):
        MeshingConfig(subsample_target=3)
    with pytest.raises(ValueError):
        MeshingConfig(support_radius=0)
    with pytest.raises(ValueError):
        MeshingConfig(hole_max_radius=-1)

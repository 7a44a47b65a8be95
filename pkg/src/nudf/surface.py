"""Point cloud to open triangle mesh: normals, Poisson-disk subsampling,
ball pivoting, support culling, hole closing and largest component."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numba as nb
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components, minimum_spanning_tree
from scipy.spatial import cKDTree

from .bpa import ball_pivoting
from .bvh import closest_points_triangles
from .geometry import (PointCloud, TriangleMesh, boundary_loops, compact, face_components,
                       split_pinched_vertices)

log = logging.getLogger(__name__)


@dataclass
class MeshingConfig:
    """Lengths are millimetres."""

    subsample_target: int = 1000
    knn_normals: int = 16
    bpa_radii: Optional[Sequence[float]] = None  # default {1,2,4} x median 6-NN spacing
    support_radius: float = 0.35
    hole_max_radius: float = 3.5

    def __post_init__(self):
        if self.subsample_target < 4:
            raise ValueError("subsample_target must be >= 4")
        if self.support_radius <= 0:
            raise ValueError("support_radius must be positive")
        if self.hole_max_radius < 0:
            raise ValueError("hole_max_radius must be non-negative")
        if self.knn_normals < 3:
            raise ValueError("knn_normals must be >= 3")


# -- normals

def estimate_normals(cloud: PointCloud, k=16) -> PointCloud:
    """PCA normals over k nearest neighbours, oriented by propagation along a
    minimum spanning tree of the k-NN graph. Each connected part is finally
    flipped so its normals point away from its centroid on average."""
    P = np.asarray(cloud.points, dtype=np.float64)
    n = len(P)
    if n < k + 1:
        raise ValueError(f"normal estimation needs at least {k + 1} points, got {n}")
    tree = cKDTree(P)
    _, nb_idx = tree.query(P, k=k + 1)
    nbrs = P[nb_idx]
    centred = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centred, centred)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]

    rows = np.repeat(np.arange(n), k)
    cols = nb_idx[:, 1:].ravel()
    w = 1.0 - np.abs(np.einsum("ij,ij->i", normals[rows], normals[cols])) + 1e-6
    g = coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    g = g.maximum(g.T)
    mst = minimum_spanning_tree(g)
    mst = mst + mst.T
    ncomp, labels = connected_components(mst, directed=False)
    for c in range(ncomp):
        root = int(np.flatnonzero(labels == c)[0])
        order, pred = breadth_first_order(mst, root, directed=False)
        for v in order[1:]:
            if normals[v] @ normals[pred[v]] < 0:
                normals[v] = -normals[v]
        members = order
        centre = P[members].mean(axis=0)
        if np.sum(np.einsum("ij,ij->i", normals[members], P[members] - centre)) < 0:
            normals[members] = -normals[members]
    return PointCloud(P, normals, dict(cloud.attributes))


# -- Poisson-disk subsampling by weighted sample elimination

@nb.njit(cache=True)
def _sift_down(heap, pos, key, i, n):
    while True:
        l = 2 * i + 1
        if l >= n:
            return
        r = l + 1
        c = l
        if r < n and (key[heap[r]] > key[heap[l]] or
                      (key[heap[r]] == key[heap[l]] and heap[r] < heap[l])):
            c = r
        a, b = heap[i], heap[c]
        if key[b] > key[a] or (key[b] == key[a] and b < a):
            heap[i], heap[c] = b, a
            pos[b], pos[a] = i, c
            i = c
        else:
            return


@nb.njit(cache=True)
def _eliminate(weights, indptr, indices, pair_w, target):
    """Remove the heaviest sample until `target` remain, subtracting its
    contribution from its neighbours. Returns a keep mask."""
    n = len(weights)
    key = weights.copy()
    heap = np.arange(n)
    pos = np.arange(n)
    for i in range(n // 2 - 1, -1, -1):
        _sift_down(heap, pos, key, i, n)
    alive = np.ones(n, dtype=np.bool_)
    size = n
    while size > target:
        top = heap[0]
        alive[top] = False
        size -= 1
        last = heap[size]
        heap[0] = last
        pos[last] = 0
        _sift_down(heap, pos, key, 0, size)
        for e in range(indptr[top], indptr[top + 1]):
            j = indices[e]
            if not alive[j]:
                continue
            key[j] -= pair_w[e]
            _sift_down(heap, pos, key, pos[j], size)
    return alive


def estimate_area(points, k=6):
    """Surface area from k-NN disc densities."""
    d, _ = cKDTree(points).query(points, k=k + 1)
    return float(np.sum(np.pi * d[:, -1] ** 2 / (k - 1)))


def _eliminate_stage(P, target, area, alpha=8.0, beta=0.65, gamma=1.5):
    n = len(P)
    r_max = np.sqrt(area / (2.0 * np.sqrt(3.0) * target))
    r_min = r_max * (1.0 - (target / n) ** gamma) * beta
    pairs = cKDTree(P).query_pairs(2.0 * r_max, output_type="ndarray")
    if len(pairs) == 0:
        keep = np.zeros(n, dtype=bool)
        keep[:target] = True
        return keep
    d = np.linalg.norm(P[pairs[:, 0]] - P[pairs[:, 1]], axis=1)
    d = np.maximum(d, 2.0 * r_min)
    w = (1.0 - d / (2.0 * r_max)) ** alpha
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    ww = np.concatenate([w, w])
    order = np.lexsort((cols, rows))
    rows, cols, ww = rows[order], cols[order], ww[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    weights = np.bincount(rows, weights=ww, minlength=n)
    return _eliminate(weights, indptr, cols.astype(np.int64), ww, int(target))


def poisson_disk_indices(points, target, stage_factor=4.0):
    """Indices (sorted) of a blue-noise subset of size `target`.

    Large reductions run in stages of at most `stage_factor` so each
    neighbourhood stays small.
    """
    P = np.asarray(points, dtype=np.float64)
    n = len(P)
    if target > n:
        raise ValueError(f"cannot subsample {n} points to {target}")
    if target < 1:
        raise ValueError("target must be >= 1")
    if target == n:
        return np.arange(n)
    area = estimate_area(P) if n > 7 else 1.0
    idx = np.arange(n)
    while len(idx) > target:
        stage = max(target, int(np.ceil(len(idx) / stage_factor)))
        keep = _eliminate_stage(P[idx], stage, area)
        idx = idx[keep]
    return idx


def poisson_disk_subsample(cloud: PointCloud, target: int) -> PointCloud:
    return cloud.subset(poisson_disk_indices(cloud.points, target))


# -- reconstruction

def default_radii(points, factors=(1.0, 2.0, 4.0), k=6):
    d, _ = cKDTree(points).query(points, k=k + 1)
    s = float(np.median(d[:, 1:].mean(axis=1)))
    return [f * s for f in factors]


def reconstruct(cloud: PointCloud, cfg: Optional[MeshingConfig] = None) -> TriangleMesh:
    """Ball pivoting over the oriented cloud; vertices are the input points
    (unreferenced ones dropped, pinched ones duplicated per fan)."""
    cfg = cfg or MeshingConfig()
    if cloud.normals is None:
        raise ValueError("reconstruction needs oriented normals")
    radii = list(cfg.bpa_radii) if cfg.bpa_radii else default_radii(cloud.points)
    faces = ball_pivoting(cloud.points, cloud.normals, radii)
    # fronts that touch at a vertex without merging leave it pinched
    return compact(*split_pinched_vertices(cloud.points, faces))


# -- repair chain

def cull_unsupported(mesh: TriangleMesh, support_points, radius, chunk=200_000) -> TriangleMesh:
    """Keep triangles with at least one support point within `radius`
    (exact point-triangle distance)."""
    S = np.asarray(support_points, dtype=np.float64).reshape(-1, 3)
    if mesh.is_empty() or len(S) == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), mesh.coordinate_frame)
    if not np.isfinite(radius):
        return mesh
    corners = mesh.corners()
    # candidate pairs from the circumscribing ball of each triangle
    centroid = corners.mean(axis=1)
    reach = np.linalg.norm(corners - centroid[:, None], axis=2).max(axis=1) + radius
    tree = cKDTree(S)
    supported = np.zeros(mesh.n_triangles, dtype=bool)
    # nearest support point first: covers the common case cheaply
    _, i0 = tree.query(centroid)
    dist = np.linalg.norm(closest_points_triangles(S[i0], corners) - S[i0], axis=1)
    supported |= dist <= radius
    todo = np.flatnonzero(~supported)
    if len(todo):
        lists = tree.query_ball_point(centroid[todo], reach[todo])
        tri = np.concatenate([np.full(len(l), t) for t, l in zip(todo, lists)] + [np.zeros(0, int)])
        pts = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists] + [np.zeros(0, int)])
        for s in range(0, len(tri), chunk):
            t_, p_ = tri[s:s + chunk], pts[s:s + chunk]
            cp = closest_points_triangles(S[p_], corners[t_])
            ok = np.linalg.norm(cp - S[p_], axis=1) <= radius
            supported[t_[ok]] = True
    return compact(mesh.vertices, mesh.triangles[supported], mesh.coordinate_frame)


def loop_radius(vertices, loop):
    v = vertices[np.asarray(loop)]
    return float(np.sum(np.linalg.norm(v - np.roll(v, -1, axis=0), axis=1)) / (2 * np.pi))


def close_small_holes(mesh: TriangleMesh, max_radius) -> TriangleMesh:
    """Fan-triangulate boundary loops whose perimeter / 2pi is below
    `max_radius` around a new centroid vertex."""
    if mesh.is_empty():
        return mesh
    V = [np.asarray(mesh.vertices)]
    T = [np.asarray(mesh.triangles)]
    n_v = mesh.n_vertices
    closed = 0
    for loop in boundary_loops(mesh.triangles):
        if len(loop) < 3 or loop_radius(mesh.vertices, loop) >= max_radius:
            continue
        centre = mesh.vertices[loop].mean(axis=0)
        # boundary edges run a -> b in their face; the patch must run b -> a
        a = np.asarray(loop)
        b = np.roll(a, -1)
        T.append(np.stack([b, a, np.full(len(a), n_v)], axis=1))
        V.append(centre[None])
        n_v += 1
        closed += 1
    if closed == 0:
        return mesh
    log.info("closed %d holes", closed)
    return TriangleMesh(np.concatenate(V), np.concatenate(T), mesh.coordinate_frame)


def largest_component(mesh: TriangleMesh) -> TriangleMesh:
    """Edge-connected component of greatest area; ties go to the component
    holding the lowest vertex index."""
    if mesh.is_empty():
        return mesh
    ncomp, labels = face_components(mesh.triangles)
    if ncomp == 1:
        return mesh
    areas = np.bincount(labels, weights=mesh.face_areas(), minlength=ncomp)
    lowest = np.full(ncomp, np.iinfo(np.int64).max)
    np.minimum.at(lowest, labels, mesh.triangles.min(axis=1))
    best = max(range(ncomp), key=lambda c: (areas[c], -lowest[c]))
    near = np.isclose(areas, areas[best], rtol=1e-12, atol=0.0)
    best = int(np.flatnonzero(near)[np.argmin(lowest[near])])
    return compact(mesh.vertices, mesh.triangles[labels == best], mesh.coordinate_frame)


def repair(mesh: TriangleMesh, support_points, cfg: MeshingConfig) -> TriangleMesh:
    m = cull_unsupported(mesh, support_points, cfg.support_radius)
    m = close_small_holes(m, cfg.hole_max_radius)
    return largest_component(m)


def mesh_point_cloud(cloud: PointCloud, cfg: Optional[MeshingConfig] = None) -> TriangleMesh:
    """Full chain: subsample, normals, reconstruct, cull against the full
    cloud, close holes, keep the largest component."""
    cfg = cfg or MeshingConfig()
    target = min(cfg.subsample_target, len(cloud))
    sub = poisson_disk_subsample(PointCloud(cloud.points), target)
    sub = estimate_normals(sub, cfg.knn_normals)
    mesh = reconstruct(sub, cfg)
    return repair(mesh, cloud.points, cfg)

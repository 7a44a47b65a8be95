"""Core geometry types: triangle meshes, point clouds, boxes and the
normalisation transform, plus area-weighted surface sampling."""
from __future__ import annotations

import hashlib
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateTriangleWarning, EmptyInputError

WORLD_MM = "world_mm"
NORMALIZED = "normalized"


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64).reshape(3))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64).reshape(3))

    @classmethod
    def cube(cls, half=1.0, center=(0.0, 0.0, 0.0)):
        c = np.asarray(center, dtype=np.float64)
        return cls(c - half, c + half)

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def extent(self):
        return self.hi - self.lo

    def contains(self, points, eps=0.0):
        p = np.asarray(points)
        return np.all((p >= self.lo - eps) & (p <= self.hi + eps), axis=-1)

    def clamp(self, points):
        return np.clip(points, self.lo, self.hi)

    def padded(self, amount):
        return Box(self.lo - amount, self.hi + amount)


@dataclass(frozen=True)
class Normalization:
    """Affine map world -> normalised: p_n = (p - center) / scale."""

    center: np.ndarray
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), 1.0)

    @classmethod
    def fit(cls, mesh: "TriangleMesh", margin=1.1):
        """Centre the bounding box and fit its largest half-extent into
        [-1/margin, 1/margin]."""
        lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
        half = float(np.max(hi - lo)) / 2.0
        return cls((lo + hi) / 2.0, half * margin if half > 0 else 1.0)

    def to_normalized(self, points):
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale

    def to_world(self, points):
        return np.asarray(points, dtype=np.float64) * self.scale + self.center

    def world_box(self):
        return Box(self.center - self.scale, self.center + self.scale)

    def matrix(self):
        """3x4 row-major world->normalised matrix."""
        m = np.zeros((3, 4))
        m[:, :3] = np.eye(3) / self.scale
        m[:, 3] = -self.center / self.scale
        return m

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64).reshape(3, 4)
        scale = 1.0 / m[0, 0]
        return cls(-m[:, 3] * scale, scale)


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    coordinate_frame: str = WORLD_MM

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def is_empty(self):
        return self.n_triangles == 0

    def corners(self):
        """(T, 3, 3) triangle corner positions."""
        return self.vertices[self.triangles]

    def face_areas(self):
        return triangle_areas(self.corners())

    def area(self):
        return float(self.face_areas().sum())

    def face_normals(self):
        c = self.corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return _unit(n)

    def vertex_normals(self):
        return angle_weighted_vertex_normals(self.vertices, self.triangles)

    def bbox(self):
        return Box(self.vertices.min(axis=0), self.vertices.max(axis=0))

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
        return h.hexdigest()

    def transformed(self, fn, frame=None):
        return TriangleMesh(fn(self.vertices), self.triangles, frame or self.coordinate_frame)

    def normalized(self, norm: Normalization):
        return TriangleMesh(norm.to_normalized(self.vertices), self.triangles, NORMALIZED)

    def to_world(self, norm: Normalization):
        return TriangleMesh(norm.to_world(self.vertices), self.triangles, WORLD_MM)

    def submesh(self, tri_mask):
        """Keep the selected triangles and drop vertices left unreferenced."""
        tris = self.triangles[tri_mask]
        return compact(self.vertices, tris, self.coordinate_frame)


@dataclass(frozen=True)
class SurfaceSamples:
    points: np.ndarray
    normals: np.ndarray
    triangle_ids: np.ndarray
    barycentric: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.points)


@dataclass
class PointCloud:
    points: np.ndarray
    normals: Optional[np.ndarray] = None
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != len(self.points):
                raise ValueError("normals and points differ in length")

    def __len__(self):
        return len(self.points)

    def subset(self, idx):
        return PointCloud(
            self.points[idx],
            None if self.normals is None else self.normals[idx],
            {k: np.asarray(v)[idx] for k, v in self.attributes.items()},
        )


def _unit(v, eps=1e-300):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, eps)


def triangle_areas(corners):
    c = np.asarray(corners)
    return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)


def angle_weighted_vertex_normals(vertices, triangles):
    """Vertex normals as incident face normals weighted by the corner angle."""
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    c = v[t]
    fn = _unit(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]))
    normals = np.zeros_like(v)
    for k in range(3):
        a = _unit(c[:, (k + 1) % 3] - c[:, k])
        b = _unit(c[:, (k + 2) % 3] - c[:, k])
        ang = np.arccos(np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0))
        np.add.at(normals, t[:, k], fn * ang[:, None])
    return _unit(normals)


def compact(vertices, triangles, frame=WORLD_MM):
    """Drop unreferenced vertices, preserving the order of the rest."""
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    used = np.zeros(len(vertices), dtype=bool)
    used[triangles.ravel()] = True
    remap = np.cumsum(used) - 1
    return TriangleMesh(np.asarray(vertices)[used], remap[triangles], frame)


def edge_topology(triangles):
    """Unique undirected edges and, per edge, the number of incident faces.

    Returns (edges (E, 2) sorted pairs, counts (E,), face_edge (T, 3)) where
    face_edge[f, k] indexes the edge from corner k to corner k+1.
    """
    t = np.asarray(triangles, dtype=np.int64)
    directed = np.stack([t, np.roll(t, -1, axis=1)], axis=-1).reshape(-1, 2)
    und = np.sort(directed, axis=1)
    edges, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    return edges, counts, inverse.reshape(-1, 3)


def euler_characteristic(mesh):
    edges, _, _ = edge_topology(mesh.triangles)
    used = np.unique(mesh.triangles)
    return len(used) - len(edges) + mesh.n_triangles


def boundary_edges(triangles):
    """Directed boundary edges (a, b) as they appear in their single face."""
    t = np.asarray(triangles, dtype=np.int64)
    if len(t) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    directed = np.stack([t, np.roll(t, -1, axis=1)], axis=-1).reshape(-1, 2)
    _, counts, face_edge = edge_topology(t)
    return directed[counts[face_edge.ravel()] == 1]


def boundary_loops(triangles):
    """Trace directed boundary edges into closed loops of vertex indices."""
    be = boundary_edges(triangles)
    outgoing = {}
    for a, b in be.tolist():
        outgoing.setdefault(a, []).append(b)
    for k in outgoing:
        outgoing[k].sort()
    loops = []
    for start in sorted(outgoing):
        while outgoing.get(start):
            loop = [start]
            cur = outgoing[start].pop(0)
            while cur != start:
                loop.append(cur)
                nxt = outgoing.get(cur)
                if not nxt:
                    break
                cur = nxt.pop(0)
            loops.append(loop)
    return loops


def non_manifold_edge_count(triangles):
    _, counts, _ = edge_topology(triangles)
    return int(np.sum(counts > 2))


def face_components(triangles):
    """Connected components of faces under edge adjacency; labels (T,)."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    t = np.asarray(triangles, dtype=np.int64)
    n = len(t)
    if n == 0:
        return 0, np.zeros(0, dtype=np.int64)
    _, _, face_edge = edge_topology(t)
    flat = face_edge.ravel()
    faces = np.repeat(np.arange(n), 3)
    # faces sharing an edge are linked through an edge node
    n_edges = flat.max() + 1
    g = coo_matrix((np.ones(len(flat)), (faces, n + flat)), shape=(n + n_edges, n + n_edges))
    ncomp, labels = connected_components(g, directed=False)
    labels = labels[:n]
    _, labels = np.unique(labels, return_inverse=True)
    return int(labels.max()) + 1, labels


def split_pinched_vertices(vertices, triangles):
    """Give each face fan around a vertex its own copy of that vertex.

    Two corners of a vertex belong to the same fan when their faces share an
    edge through it. Returns (vertices, triangles); copies keep the position
    of the original, and the first fan keeps the original index.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    v = np.asarray(vertices)
    t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(t) == 0:
        return v, t
    _, counts, face_edge = edge_topology(t)
    n_corner = t.size
    rows, cols = [], []
    # corner (f, k) sits at vertex t[f, k]; edge k runs t[f, k] -> t[f, k+1]
    order = np.argsort(face_edge.ravel(), kind="stable")
    fe = face_edge.ravel()[order]
    pair = np.flatnonzero((fe[1:] == fe[:-1]) & (counts[fe[1:]] == 2))
    for a, b in zip(order[pair], order[pair + 1]):
        fa, ka, fb, kb = a // 3, a % 3, b // 3, b % 3
        for ca in (3 * fa + ka, 3 * fa + (ka + 1) % 3):
            for cb in (3 * fb + kb, 3 * fb + (kb + 1) % 3):
                if t.flat[ca] == t.flat[cb]:
                    rows.append(ca)
                    cols.append(cb)
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_corner, n_corner))
    _, label = connected_components(g, directed=False)
    # number fans per vertex in order of their first corner
    first = np.full(label.max() + 1, n_corner)
    np.minimum.at(first, label, np.arange(n_corner))
    fans = np.argsort(first, kind="stable")
    owner = t.ravel()[first[fans]]
    seen = np.zeros(len(v), dtype=bool)
    new_index = np.empty(len(fans), dtype=np.int64)
    extra = []
    for i, (fan, vert) in enumerate(zip(fans, owner)):
        if seen[vert]:
            new_index[i] = len(v) + len(extra)
            extra.append(vert)
        else:
            new_index[i] = vert
            seen[vert] = True
    remap = np.empty(len(fans), dtype=np.int64)
    remap[fans] = new_index
    if not extra:
        return v, t
    return np.concatenate([v, v[extra]]), remap[label].reshape(-1, 3)


def orient_consistently(triangles):
    """Flip faces so that each edge-connected component is consistently wound.

    Non-orientable components keep the orientation found by the BFS.
    """
    t = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    n = len(t)
    if n == 0:
        return t
    _, counts, face_edge = edge_topology(t)
    edge_faces = {}
    for f in range(n):
        for k in range(3):
            edge_faces.setdefault(int(face_edge[f, k]), []).append(f)
    visited = np.zeros(n, dtype=bool)

    def directed(f):
        a, b, c = t[f]
        return {(a, b), (b, c), (c, a)}

    for root in range(n):
        if visited[root]:
            continue
        visited[root] = True
        queue = deque([root])
        while queue:
            f = queue.popleft()
            df = directed(f)
            for k in range(3):
                e = int(face_edge[f, k])
                if counts[e] != 2:
                    continue
                for g in edge_faces[e]:
                    if g == f or visited[g]:
                        continue
                    # neighbours must traverse the shared edge in opposite directions
                    if directed(g) & df:
                        t[g] = t[g][::-1]
                    visited[g] = True
                    queue.append(g)
    return t


def clean_mesh(vertices, triangles, frame=WORLD_MM, area_eps=0.0):
    """Drop zero-area and repeated-index triangles and unreferenced vertices,
    then make winding consistent per component. Returns (mesh, n_dropped)."""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(t):
        areas = triangle_areas(v[t])
        repeated = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        keep = (areas > area_eps) & ~repeated
    else:
        keep = np.zeros(0, dtype=bool)
    dropped = int(np.sum(~keep))
    t = orient_consistently(t[keep])
    return compact(v, t, frame), dropped


def make_mesh(vertices, triangles, frame=WORLD_MM, warn=True):
    mesh, dropped = clean_mesh(vertices, triangles, frame)
    if dropped and warn:
        warnings.warn(DegenerateTriangleWarning(dropped), stacklevel=2)
    return mesh


def area_weighted_sample(mesh: TriangleMesh, n: int, seed: int) -> SurfaceSamples:
    """Draw `n` points uniformly by area with barycentrically interpolated
    angle-weighted vertex normals."""
    if mesh.is_empty():
        raise EmptyInputError("cannot sample an empty mesh")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    cdf = np.cumsum(areas)
    u = rng.random(n) * cdf[-1]
    tri = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    corners = mesh.vertices[mesh.triangles[tri]]
    points = np.einsum("nk,nkd->nd", bary, corners)
    vn = mesh.vertex_normals()[mesh.triangles[tri]]
    normals = np.einsum("nk,nkd->nd", bary, vn)
    # opposite vertex normals can cancel on creases; fall back to the face normal
    norm = np.linalg.norm(normals, axis=1)
    bad = norm < 1e-12
    if np.any(bad):
        normals[bad] = mesh.face_normals()[tri[bad]]
        norm[bad] = 1.0
    normals /= norm[:, None]
    return SurfaceSamples(points, normals, tri, bary)

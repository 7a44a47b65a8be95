"""Axis-aligned bounding-volume hierarchy over triangles.

Exact point-to-surface unsigned distance and first-hit ray casting. The
hierarchy is a binary tree built by median split on the widest centroid
axis, with at most LEAF_SIZE triangles per leaf. Query kernels are compiled
with numba; each query is independent, so results do not depend on the
number of threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import EmptyInputError
from .geometry import TriangleMesh

LEAF_SIZE = 4
_JIT = dict(cache=True, error_model="numpy")
# TBB in this image is too old for numba; workqueue is always available.
nb.config.THREADING_LAYER = "workqueue"


@nb.njit(**_JIT)
def _build(corners, leaf_size):
    n = corners.shape[0]
    cent = np.empty((n, 3))
    tmin = np.empty((n, 3))
    tmax = np.empty((n, 3))
    for i in range(n):
        for a in range(3):
            lo = min(corners[i, 0, a], corners[i, 1, a], corners[i, 2, a])
            hi = max(corners[i, 0, a], corners[i, 1, a], corners[i, 2, a])
            tmin[i, a] = lo
            tmax[i, a] = hi
            cent[i, a] = (corners[i, 0, a] + corners[i, 1, a] + corners[i, 2, a]) / 3.0
    order = np.arange(n)
    cap = 2 * n + 1
    bmin = np.empty((cap, 3))
    bmax = np.empty((cap, 3))
    left = -np.ones(cap, dtype=np.int64)
    right = -np.ones(cap, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    n_nodes = 1
    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        for a in range(3):
            bmin[node, a] = np.inf
            bmax[node, a] = -np.inf
        cmin = np.full(3, np.inf)
        cmax = np.full(3, -np.inf)
        for k in range(lo, hi):
            t = order[k]
            for a in range(3):
                bmin[node, a] = min(bmin[node, a], tmin[t, a])
                bmax[node, a] = max(bmax[node, a], tmax[t, a])
                cmin[a] = min(cmin[a], cent[t, a])
                cmax[a] = max(cmax[a], cent[t, a])
        if hi - lo <= leaf_size:
            start[node] = lo
            count[node] = hi - lo
            continue
        axis = 0
        ext = cmax[0] - cmin[0]
        for a in range(1, 3):
            if cmax[a] - cmin[a] > ext:
                ext = cmax[a] - cmin[a]
                axis = a
        seg = order[lo:hi].copy()
        keys = np.empty(hi - lo)
        for k in range(hi - lo):
            keys[k] = cent[seg[k], axis]
        # stable sort keeps the build deterministic for tied centroids
        srt = np.argsort(keys, kind="mergesort")
        for k in range(hi - lo):
            order[lo + k] = seg[srt[k]]
        mid = (lo + hi) // 2
        l_node = n_nodes
        r_node = n_nodes + 1
        n_nodes += 2
        left[node] = l_node
        right[node] = r_node
        stack_node[sp] = r_node
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        sp += 1
        stack_node[sp] = l_node
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        sp += 1
    return (bmin[:n_nodes].copy(), bmax[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), start[:n_nodes].copy(), count[:n_nodes].copy(), order)


@nb.njit(**_JIT)
def _closest_scalar(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    # Voronoi-region walk over vertices, edges and the face interior.
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w)


@nb.njit(**_JIT)
def closest_point_triangle(p, a, b, c):
    """Closest point on triangle abc to p."""
    x, y, z = _closest_scalar(p[0], p[1], p[2], a[0], a[1], a[2],
                              b[0], b[1], b[2], c[0], c[1], c[2])
    return np.array([x, y, z])


@nb.njit(parallel=True, **_JIT)
def closest_points_triangles(points, corners):
    """Row-wise closest point on corners[i] to points[i]."""
    n = points.shape[0]
    out = np.empty((n, 3))
    for i in nb.prange(n):
        x, y, z = _closest_scalar(points[i, 0], points[i, 1], points[i, 2],
                                  corners[i, 0, 0], corners[i, 0, 1], corners[i, 0, 2],
                                  corners[i, 1, 0], corners[i, 1, 1], corners[i, 1, 2],
                                  corners[i, 2, 0], corners[i, 2, 1], corners[i, 2, 2])
        out[i, 0] = x
        out[i, 1] = y
        out[i, 2] = z
    return out


@nb.njit(**_JIT)
def _box_dist2(p, lo, hi):
    d = 0.0
    for a in range(3):
        if p[a] < lo[a]:
            d += (lo[a] - p[a]) ** 2
        elif p[a] > hi[a]:
            d += (p[a] - hi[a]) ** 2
    return d


@nb.njit(**_JIT)
def _query_point(p, corners, bmin, bmax, left, right, start, count, order, out_cp):
    best = np.inf
    best_t = -1
    stack = np.empty(128, dtype=np.int64)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_dist2(p, bmin[node], bmax[node]) >= best:
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                t = order[k]
                qx, qy, qz = _closest_scalar(
                    p[0], p[1], p[2],
                    corners[t, 0, 0], corners[t, 0, 1], corners[t, 0, 2],
                    corners[t, 1, 0], corners[t, 1, 1], corners[t, 1, 2],
                    corners[t, 2, 0], corners[t, 2, 1], corners[t, 2, 2])
                d2 = (qx - p[0]) ** 2 + (qy - p[1]) ** 2 + (qz - p[2]) ** 2
                if d2 < best:
                    best = d2
                    best_t = t
                    out_cp[0] = qx
                    out_cp[1] = qy
                    out_cp[2] = qz
            continue
        l_node = left[node]
        r_node = right[node]
        dl = _box_dist2(p, bmin[l_node], bmax[l_node])
        dr = _box_dist2(p, bmin[r_node], bmax[r_node])
        # push the farther child first so the nearer one is popped next
        if dl <= dr:
            if dr < best:
                stack[sp] = r_node
                sp += 1
            if dl < best:
                stack[sp] = l_node
                sp += 1
        else:
            if dl < best:
                stack[sp] = l_node
                sp += 1
            if dr < best:
                stack[sp] = r_node
                sp += 1
    return np.sqrt(best), best_t


@nb.njit(parallel=True, **_JIT)
def _query_points(points, corners, bmin, bmax, left, right, start, count, order):
    n = points.shape[0]
    dist = np.empty(n)
    cp = np.empty((n, 3))
    tri = np.empty(n, dtype=np.int64)
    for i in nb.prange(n):
        q = np.empty(3)
        d, t = _query_point(points[i], corners, bmin, bmax, left, right, start, count, order, q)
        dist[i] = d
        tri[i] = t
        cp[i, 0] = q[0]
        cp[i, 1] = q[1]
        cp[i, 2] = q[2]
    return dist, cp, tri


@nb.njit(**_JIT)
def _ray_box(o, inv, lo, hi, t0, t1):
    for a in range(3):
        if np.isinf(inv[a]):
            # ray parallel to the slab
            if o[a] < lo[a] or o[a] > hi[a]:
                return False
            continue
        ta = (lo[a] - o[a]) * inv[a]
        tb = (hi[a] - o[a]) * inv[a]
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    return True


@nb.njit(**_JIT)
def ray_triangle(o, d, a, b, c):
    """Moller-Trumbore; returns t or inf. Edges are inclusive."""
    e1 = b - a
    e2 = c - a
    px = d[1] * e2[2] - d[2] * e2[1]
    py = d[2] * e2[0] - d[0] * e2[2]
    pz = d[0] * e2[1] - d[1] * e2[0]
    det = e1[0] * px + e1[1] * py + e1[2] * pz
    if abs(det) < 1e-300:
        return np.inf
    inv = 1.0 / det
    sx = o[0] - a[0]
    sy = o[1] - a[1]
    sz = o[2] - a[2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = sy * e1[2] - sz * e1[1]
    qy = sz * e1[0] - sx * e1[2]
    qz = sx * e1[1] - sy * e1[0]
    v = (d[0] * qx + d[1] * qy + d[2] * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf
    return (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv


@nb.njit(**_JIT)
def _ray_one(o, d, t_min, t_max, corners, bmin, bmax, left, right, start, count, order):
    inv = np.empty(3)
    for a in range(3):
        inv[a] = 1.0 / d[a] if d[a] != 0.0 else np.inf
    best = t_max
    best_t = -1
    stack = np.empty(128, dtype=np.int64)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _ray_box(o, inv, bmin[node], bmax[node], t_min, best):
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                t = order[k]
                th = ray_triangle(o, d, corners[t, 0], corners[t, 1], corners[t, 2])
                if th > t_min and th <= best:
                    if th < best or best_t < 0 or t < best_t:
                        best = th
                        best_t = t
            continue
        stack[sp] = right[node]
        sp += 1
        stack[sp] = left[node]
        sp += 1
    if best_t < 0:
        return np.inf, -1
    return best, best_t


@nb.njit(parallel=True, **_JIT)
def _ray_many(origins, dirs, t_min, t_max, corners, bmin, bmax, left, right, start, count, order):
    n = origins.shape[0]
    th = np.empty(n)
    tri = np.empty(n, dtype=np.int64)
    for i in nb.prange(n):
        t, k = _ray_one(origins[i], dirs[i], t_min[i], t_max[i], corners,
                        bmin, bmax, left, right, start, count, order)
        th[i] = t
        tri[i] = k
    return th, tri


@dataclass(frozen=True)
class DistanceResult:
    distance: float
    closest_point: np.ndarray
    triangle_id: int


class MeshIndex:
    """Immutable BVH over the triangles of a mesh."""

    def __init__(self, mesh: TriangleMesh, leaf_size=LEAF_SIZE):
        if mesh.is_empty():
            raise EmptyInputError("cannot index an empty mesh")
        self.mesh = mesh
        self.leaf_size = leaf_size
        self._corners = np.ascontiguousarray(mesh.corners())
        (self._bmin, self._bmax, self._left, self._right,
         self._start, self._count, self._order) = _build(self._corners, leaf_size)
        self.diagonal = mesh.bbox().diagonal

    @property
    def n_nodes(self):
        return len(self._left)

    def _arrays(self):
        return (self._corners, self._bmin, self._bmax, self._left, self._right,
                self._start, self._count, self._order)

    def leaves(self):
        """Triangle ids per leaf, in node order."""
        out = []
        for node in np.flatnonzero(self._left < 0):
            s, c = self._start[node], self._count[node]
            out.append(self._order[s:s + c].copy())
        return out

    def node_boxes(self):
        return self._bmin, self._bmax, self._left, self._right

    def closest(self, points):
        """Vectorised query: (distances, closest points, triangle ids)."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        if len(pts) == 0:
            return np.zeros(0), np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
        return _query_points(pts, *self._arrays())

    def unsigned_distance(self, p) -> DistanceResult:
        d, cp, t = self.closest(np.asarray(p, dtype=np.float64).reshape(1, 3))
        return DistanceResult(float(d[0]), cp[0], int(t[0]))

    def batch_unsigned_distance(self, points):
        return self.closest(points)[0]

    def cast_rays(self, origins, directions, t_min, t_max):
        """Nearest hits for many rays; t = inf and id = -1 when missed."""
        o = np.ascontiguousarray(np.asarray(origins, dtype=np.float64).reshape(-1, 3))
        d = np.ascontiguousarray(np.asarray(directions, dtype=np.float64).reshape(-1, 3))
        n = len(o)
        tmin = np.ascontiguousarray(np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,)))
        tmax = np.ascontiguousarray(np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)))
        if n == 0:
            return np.zeros(0), np.zeros(0, dtype=np.int64)
        return _ray_many(o, d, tmin, tmax, *self._arrays())

    def ray_first_hit(self, origin, direction, t_min=None, t_max=np.inf):
        """Smallest t in (t_min, t_max] hitting any triangle, as (t, id), or None."""
        direction = np.asarray(direction, dtype=np.float64)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
            raise ValueError("direction must be a unit vector")
        if t_min is None:
            t_min = 1e-5 * self.diagonal
        t, k = self.cast_rays(origin, direction, t_min, t_max)
        if k[0] < 0:
            return None
        return float(t[0]), int(k[0])


def build_index(mesh: TriangleMesh, leaf_size=LEAF_SIZE) -> MeshIndex:
    return MeshIndex(mesh, leaf_size)


def batch_unsigned_distance(index: MeshIndex, points):
    return index.batch_unsigned_distance(points)


def set_threads(n):
    """Cap numba parallelism; results are independent of this value."""
    if n and n > 0:
        nb.set_num_threads(min(int(n), nb.config.NUMBA_NUM_THREADS))

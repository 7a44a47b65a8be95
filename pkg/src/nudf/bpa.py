"""Ball-pivoting surface reconstruction from oriented points.

A ball of radius rho is seeded on an empty triangle and pivoted around each
front edge until it touches a new point. Faces are only added when every
edge keeps at most two faces with opposite orientations, so the output is
edge-manifold by construction; open boundaries are left open. Several radii
are processed in increasing order, re-pivoting the boundary edges left by
the previous radius.
"""
from __future__ import annotations

import logging
from collections import deque

import numpy as np
from scipy.spatial import cKDTree

from .errors import ReconstructionError

log = logging.getLogger(__name__)

# minimum cosine between a new face normal and each of its vertex normals
NORMAL_AGREEMENT = 0.2
_EMPTY_TOL = 1e-7


def _circumcenter(a, b, c):
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    nn = n @ n
    if nn < 1e-30:
        return None, np.inf, None
    cc = a + (np.cross(n, ab) * (ac @ ac) + np.cross(ac, n) * (ab @ ab)) / (2.0 * nn)
    return cc, float(np.linalg.norm(cc - a)), n / np.sqrt(nn)


class BallPivoting:
    def __init__(self, points, normals):
        self.P = np.asarray(points, dtype=np.float64)
        self.N = np.asarray(normals, dtype=np.float64)
        self.tree = cKDTree(self.P)
        self.faces = []
        self.edge_faces = {}      # (min, max) -> list of face ids
        self.used = np.zeros(len(self.P), dtype=bool)
        self.open_edges = np.zeros(len(self.P), dtype=np.int64)  # per-vertex count of 1-face edges
        self.front = deque()
        self.boundary = []
        self._seed_cursor = 0

    # -- geometry helpers

    def _ball(self, a, b, c, rho):
        """Centre of the radius-rho ball on the normal side of face (a, b, c)."""
        P = self.P
        cc, r, n = _circumcenter(P[a], P[b], P[c])
        if cc is None or r > rho:
            return None
        return cc + np.sqrt(max(rho * rho - r * r, 0.0)) * n

    def _normals_agree(self, a, b, c):
        P = self.P
        n = np.cross(P[b] - P[a], P[c] - P[a])
        nn = np.linalg.norm(n)
        if nn < 1e-30:
            return False
        n /= nn
        return bool(np.all(self.N[[a, b, c]] @ n > NORMAL_AGREEMENT))

    def _empty(self, center, rho, keep):
        near = self.tree.query_ball_point(center, rho * (1.0 - _EMPTY_TOL))
        return all(k in keep for k in near)

    # -- topology helpers

    @staticmethod
    def _key(a, b):
        return (a, b) if a < b else (b, a)

    def _directed_in_face(self, a, b):
        """True when an existing face traverses a -> b."""
        for f in self.edge_faces.get(self._key(a, b), ()):
            x, y, z = self.faces[f]
            if (x, y) == (a, b) or (y, z) == (a, b) or (z, x) == (a, b):
                return True
        return False

    def _can_add(self, a, b, c):
        """Face (a, b, c) keeps every edge manifold and consistently wound."""
        for u, v in ((a, b), (b, c), (c, a)):
            faces = self.edge_faces.get(self._key(u, v), ())
            if len(faces) >= 2:
                return False
            if faces and self._directed_in_face(u, v):
                return False
        for v in (a, b, c):
            if self.used[v] and self.open_edges[v] == 0:
                return False
        return True

    def _add_face(self, a, b, c, rho):
        fid = len(self.faces)
        self.faces.append((a, b, c))
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            k = self._key(u, v)
            lst = self.edge_faces.setdefault(k, [])
            lst.append(fid)
            if len(lst) == 1:
                self.open_edges[u] += 1
                self.open_edges[v] += 1
                self.front.append((u, v, w))
            else:
                self.open_edges[u] -= 1
                self.open_edges[v] -= 1
        self.used[[a, b, c]] = True

    # -- ball pivoting

    def _pivot(self, i, j, k, rho):
        """Pivot the ball on face (i, j, k) around edge i -> j. Returns the
        new vertex or None."""
        P = self.P
        c0 = self._ball(i, j, k, rho)
        if c0 is None:
            return None
        m = 0.5 * (P[i] + P[j])
        axis = P[j] - P[i]
        axis /= np.linalg.norm(axis)
        u = c0 - m
        u -= (u @ axis) * axis
        # the centre first moves away from the opposite vertex
        wk = P[k] - m
        if np.cross(axis, u) @ wk > 0:
            axis = -axis
        cands = []
        for x in self.tree.query_ball_point(m, 2.0 * rho):
            if x in (i, j, k):
                continue
            c = self._ball(j, i, x, rho)
            if c is None:
                continue
            v = c - m
            v -= (v @ axis) * axis
            ang = np.arctan2(np.cross(u, v) @ axis, u @ v) % (2 * np.pi)
            cands.append((ang, x, c))
        cands.sort(key=lambda t: (t[0], t[1]))
        for ang, x, c in cands:
            if not self._normals_agree(j, i, x):
                continue
            if not self._can_add(j, i, x):
                continue
            if not self._empty(c, rho, (i, j, x)):
                continue
            return x
        return None

    def _find_seed(self, rho, max_neighbors=16):
        P = self.P
        n = len(P)
        while self._seed_cursor < n:
            i = self._seed_cursor
            self._seed_cursor += 1
            if self.used[i]:
                continue
            d, nb = self.tree.query(P[i], k=min(max_neighbors + 1, n), distance_upper_bound=2 * rho)
            nb = [int(x) for x, dd in zip(np.atleast_1d(nb), np.atleast_1d(d))
                  if np.isfinite(dd) and x != i and not self.used[x]]
            for a_idx in range(len(nb)):
                for b_idx in range(a_idx + 1, len(nb)):
                    j, k = nb[a_idx], nb[b_idx]
                    tri = (i, j, k)
                    if not self._normals_agree(*tri):
                        tri = (i, k, j)
                        if not self._normals_agree(*tri):
                            continue
                    c = self._ball(*tri, rho)
                    if c is None or not self._empty(c, rho, tri):
                        continue
                    return tri
        return None

    def _expand(self, rho):
        while self.front:
            i, j, k = self.front.popleft()
            faces = self.edge_faces.get(self._key(i, j), ())
            if len(faces) != 1:
                continue
            x = self._pivot(i, j, k, rho)
            if x is None:
                self.boundary.append((i, j, k))
            else:
                self._add_face(j, i, x, rho)

    def run(self, radii):
        for rho in sorted(radii):
            # boundary edges from the previous radius get another chance
            self.front.extend(self.boundary)
            self.boundary = []
            self._expand(rho)
            self._seed_cursor = 0
            while True:
                seed = self._find_seed(rho)
                if seed is None:
                    break
                self._add_face(*seed, rho)
                self._expand(rho)
        return np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)


def ball_pivoting(points, normals, radii):
    """Triangles (indices into `points`) from ball pivoting over `radii`."""
    radii = [float(r) for r in radii if r > 0]
    if not radii:
        raise ReconstructionError("no positive ball radius given")
    faces = BallPivoting(points, normals).run(radii)
    if len(faces) == 0:
        raise ReconstructionError(
            f"ball pivoting produced no triangle with radii {radii}; "
            "increase the radii (they should exceed the typical point spacing)")
    log.info("ball pivoting: %d faces from %d points", len(faces), len(points))
    return faces

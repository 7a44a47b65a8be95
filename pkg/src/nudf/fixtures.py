"""Synthetic test shapes, in millimetres at roughly appendage scale.

Every generator is deterministic and returns a cleaned, consistently wound
TriangleMesh with outward (or +z) facing normals.
"""
from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh, make_mesh


def unit_cube():
    """Axis-aligned cube [0, 1]^3, 8 vertices, 12 triangles."""
    v = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float)
    t = [
        (0, 2, 1), (1, 2, 3),  # z = 0
        (4, 5, 6), (5, 7, 6),  # z = 1
        (0, 1, 4), (1, 5, 4),  # y = 0
        (2, 6, 3), (3, 6, 7),  # y = 1
        (0, 4, 2), (2, 4, 6),  # x = 0
        (1, 3, 5), (3, 7, 5),  # x = 1
    ]
    return TriangleMesh(v, t)


def unit_square():
    """Square [0, 1]^2 in the z = 0 plane, two triangles."""
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    return TriangleMesh(v, [(0, 1, 2), (0, 2, 3)])


def single_triangle():
    return TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [(0, 1, 2)])


def icosphere(radius=1.0, subdivisions=3, center=(0.0, 0.0, 0.0)):
    phi = (1 + 5 ** 0.5) / 2
    v = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
         (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
         (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
         (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
         (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
         (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = np.array(v, dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(f, dtype=np.int64)
    for _ in range(subdivisions):
        edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        mids = verts[uniq[:, 0]] + verts[uniq[:, 1]]
        mids /= np.linalg.norm(mids, axis=1, keepdims=True)
        base = len(verts)
        verts = np.concatenate([verts, mids])
        nf = len(faces)
        ab, bc, ca = (inv[:nf] + base, inv[nf:2 * nf] + base, inv[2 * nf:] + base)
        a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
        faces = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)])
    return TriangleMesh(verts * radius + np.asarray(center, dtype=float), faces)


def _grid_faces(n_rows, n_cols, wrap_cols):
    """Quads of a (n_rows x n_cols) vertex grid split into triangles."""
    faces = []
    cols = n_cols if wrap_cols else n_cols - 1
    for i in range(n_rows - 1):
        for j in range(cols):
            a = i * n_cols + j
            b = i * n_cols + (j + 1) % n_cols
            c = (i + 1) * n_cols + j
            d = (i + 1) * n_cols + (j + 1) % n_cols
            faces += [(a, c, b), (b, c, d)]
    return faces


def revolve(rho, z, n_theta=64, pole_start=False, pole_end=False):
    """Surface of revolution about +z of the profile (rho[i], z[i]).

    A profile end with rho == 0 is collapsed into a single pole vertex when
    the matching pole flag is set; otherwise that end stays an open rim.
    """
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    inner = slice(1 if pole_start else 0, len(rho) - 1 if pole_end else len(rho))
    r_in, z_in = rho[inner], z[inner]
    th = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    ring = np.stack([np.outer(r_in, np.cos(th)), np.outer(r_in, np.sin(th)),
                     np.repeat(z_in[:, None], n_theta, 1)], -1).reshape(-1, 3)
    faces = _grid_faces(len(r_in), n_theta, True)
    verts = [ring]
    n_ring = len(ring)
    if pole_start:
        p = n_ring
        verts.append([[0.0, 0.0, z[0]]])
        faces += [(p, (j + 1) % n_theta, j) for j in range(n_theta)]
    if pole_end:
        p = n_ring + (1 if pole_start else 0)
        last = (len(r_in) - 1) * n_theta
        verts.append([[0.0, 0.0, z[-1]]])
        faces += [(p, last + j, last + (j + 1) % n_theta) for j in range(n_theta)]
    return np.concatenate([np.asarray(x, dtype=float) for x in verts]), np.asarray(faces)


def _orient_outward(mesh, center=None):
    """Flip the whole mesh if its normals point mostly toward `center`."""
    c = mesh.vertices.mean(axis=0) if center is None else np.asarray(center)
    cent = mesh.corners().mean(axis=1)
    s = np.sum(np.einsum("ij,ij->i", mesh.face_normals(), cent - c) * mesh.face_areas())
    if s < 0:
        return TriangleMesh(mesh.vertices, mesh.triangles[:, ::-1], mesh.coordinate_frame)
    return mesh


def uv_sphere(radius=20.0, n_phi=48, n_theta=96):
    phi = np.linspace(np.pi, 0, n_phi + 1)
    v, f = revolve(radius * np.sin(phi), radius * np.cos(phi), n_theta, True, True)
    return _orient_outward(make_mesh(v, f, warn=False), (0, 0, 0))


def hemisphere(radius=20.0, n_phi=24, n_theta=96):
    """Upper half of a sphere; the open rim lies in the z = 0 plane."""
    phi = np.linspace(np.pi / 2, 0, n_phi + 1)
    v, f = revolve(radius * np.sin(phi), radius * np.cos(phi), n_theta, False, True)
    return _orient_outward(make_mesh(v, f, warn=False), (0, 0, 0))


def capsule(length=30.0, radius=10.0, n_cap=16, n_body=24, n_theta=64):
    """Cylinder of `length` along z with hemispherical caps, centred at 0."""
    a = np.linspace(-np.pi / 2, 0, n_cap + 1)
    bottom_r, bottom_z = radius * np.cos(a), -length / 2 + radius * np.sin(a)
    body_z = np.linspace(-length / 2, length / 2, n_body + 1)[1:-1]
    top_r, top_z = radius * np.cos(-a[::-1]), length / 2 + radius * np.sin(-a[::-1])
    rho = np.concatenate([bottom_r, np.full(len(body_z), radius), top_r])
    z = np.concatenate([bottom_z, body_z, top_z])
    rho[0] = rho[-1] = 0.0
    v, f = revolve(rho, z, n_theta, True, True)
    return _orient_outward(make_mesh(v, f, warn=False), (0, 0, 0))


def torus(major=20.0, minor=8.0, n_major=96, n_minor=48):
    u = np.linspace(0, 2 * np.pi, n_major, endpoint=False)
    w = np.linspace(0, 2 * np.pi, n_minor, endpoint=False)
    uu, ww = np.meshgrid(u, w, indexing="ij")
    r = major + minor * np.cos(ww)
    v = np.stack([r * np.cos(uu), r * np.sin(uu), minor * np.sin(ww)], -1).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = i * n_minor + (j + 1) % n_minor
            c = ((i + 1) % n_major) * n_minor + j
            d = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            faces += [(a, c, b), (b, c, d)]
    mesh = make_mesh(v, faces, warn=False)
    # outward = away from the tube's core circle
    cent = mesh.corners().mean(axis=1)
    core = cent.copy()
    core[:, 2] = 0
    core[:, :2] *= major / np.linalg.norm(core[:, :2], axis=1, keepdims=True)
    s = np.sum(np.einsum("ij,ij->i", mesh.face_normals(), cent - core))
    if s < 0:
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[:, ::-1])
    return mesh


def plate(center, size, normal_axis=2, resolution=16):
    """Square plate of side `size` perpendicular to an axis."""
    s = np.linspace(-size / 2, size / 2, resolution + 1)
    uu, vv = np.meshgrid(s, s, indexing="ij")
    pts = np.zeros(uu.shape + (3,))
    a, b = [k for k in range(3) if k != normal_axis]
    pts[..., a] = uu
    pts[..., b] = vv
    pts = pts.reshape(-1, 3) + np.asarray(center, dtype=float)
    faces = np.asarray(_grid_faces(resolution + 1, resolution + 1, False))
    return pts, faces


def merge(*parts):
    verts, faces, off = [], [], 0
    for v, f in parts:
        verts.append(np.asarray(v, dtype=float))
        faces.append(np.asarray(f, dtype=np.int64) + off)
        off += len(v)
    return np.concatenate(verts), np.concatenate(faces)


def merge_meshes(*meshes):
    """Disjoint union of meshes as one TriangleMesh."""
    v, f = merge(*[(m.vertices, m.triangles) for m in meshes])
    return TriangleMesh(v, f, meshes[0].coordinate_frame)


def plate_pair(gap=4.0, size=40.0, resolution=16, center=(0.0, 0.0, 0.0)):
    """Two parallel square plates `gap` apart, normals facing each other."""
    c = np.asarray(center, dtype=float)
    lower = plate(c - [0, 0, gap / 2], size, 2, resolution)
    upper_v, upper_f = plate(c + [0, 0, gap / 2], size, 2, resolution)
    v, f = merge(lower, (upper_v, upper_f[:, ::-1]))
    return make_mesh(v, f, warn=False)


def dumbbell_plates(small_gap=2.0, large_gap=40.0, size=30.0, resolution=16, separation=50.0):
    """Two plate pairs of equal area: a thin one (small shape diameter) at
    negative x and a wide one (large shape diameter) at positive x."""
    thin = plate_pair(small_gap, size, resolution, (-separation / 2, 0, 0))
    wide = plate_pair(large_gap, size, resolution, (separation / 2, 0, 0))
    v, f = merge((thin.vertices, thin.triangles), (wide.vertices, wide.triangles))
    return make_mesh(v, f, warn=False)


def appendage(length=45.0, radius=11.0, lobes=3, lobe_depth=0.22, n_u=120, n_v=96):
    """Curved multi-lobed tube, open at one end (the 'ostium') and closed
    by a rounded tip at the other."""
    u = np.linspace(0.0, 1.0, n_u + 1)
    v = np.linspace(0, 2 * np.pi, n_v, endpoint=False)

    def center(s):
        return np.stack([length * s, 3.0 * np.sin(1.5 * np.pi * s), 4.0 * np.sin(np.pi * s)], -1)

    h = 1e-5
    tang = center(u + h) - center(u - h)
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)
    up = np.array([0.0, 1.0, 0.0])
    nrm = up - np.outer(tang @ up, np.ones(3)) * tang
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    bin_ = np.cross(tang, nrm)
    tip = np.clip((u - 0.7) / 0.3, 0.0, 1.0)
    r_u = radius * (0.9 + 0.1 * np.cos(3 * np.pi * u)) * np.sqrt(np.clip(1 - tip ** 2, 0, 1))
    uu, vv = np.meshgrid(np.arange(len(u)), v, indexing="ij")
    r = r_u[uu] * (1 + lobe_depth * np.cos(lobes * vv + 1.5 * u[uu]))
    c = center(u)[uu]
    pts = c + r[..., None] * (np.cos(vv)[..., None] * nrm[uu] + np.sin(vv)[..., None] * bin_[uu])
    ring = pts[:-1].reshape(-1, 3)
    faces = _grid_faces(n_u, n_v, True)
    pole = len(ring)
    last = (n_u - 1) * n_v
    faces += [(pole, last + j, last + (j + 1) % n_v) for j in range(n_v)]
    verts = np.concatenate([ring, center(np.array([1.0]))])
    mesh = make_mesh(verts, faces, warn=False)
    # orient away from the centreline
    cent = mesh.corners().mean(axis=1)
    s_idx = np.clip(np.round(cent[:, 0] / length * n_u).astype(int), 0, n_u)
    s = np.sum(np.einsum("ij,ij->i", mesh.face_normals(), cent - center(u)[s_idx]))
    if s < 0:
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[:, ::-1])
    return mesh


def punctured_icosphere(radius=20.0, subdivisions=3, n_remove=3):
    """Icosphere with a small hole made by removing `n_remove` adjacent faces
    around one vertex."""
    s = icosphere(radius, subdivisions)
    v0 = 0
    incident = np.flatnonzero(np.any(s.triangles == v0, axis=1))[:n_remove]
    keep = np.ones(s.n_triangles, dtype=bool)
    keep[incident] = False
    return s.submesh(keep)


FIXTURES = {
    "unit_cube": (unit_cube, "closed"),
    "unit_square": (unit_square, "open"),
    "icosphere": (lambda: icosphere(20.0, 4), "closed"),
    "icosphere_fine": (lambda: icosphere(20.0, 5), "closed"),
    "sphere": (lambda: icosphere(20.0, 4), "closed"),
    "torus": (torus, "closed"),
    "capsule": (capsule, "closed"),
    "hemisphere": (hemisphere, "open"),
    "plate_pair": (plate_pair, "open"),
    "dumbbell_plates": (dumbbell_plates, "open"),
    "appendage": (appendage, "open"),
}


def get_fixture(name):
    try:
        return FIXTURES[name][0]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None

"""Distance fields: value and spatial gradient at continuous points.

All fields share one contract (`DistanceField`): `eval`, `grad` and
`eval_grad` accept a single point (3,) or a batch (N, 3). Points outside the
field's domain are evaluated by clamped extension: the value at the clamped
point plus the clamp distance.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedFileError
from .geometry import Box


class DistanceField:
    domain: Box

    def _eval_grad(self, p):
        """Value (N,) and gradient (N, 3) for points inside the domain."""
        raise NotImplementedError

    def eval_grad(self, p):
        p = np.asarray(p, dtype=np.float64)
        single = p.ndim == 1
        p = p.reshape(-1, 3)
        q = self.domain.clamp(p)
        d, g = self._eval_grad(q)
        off = p - q
        outside = np.any(off != 0.0, axis=1)
        if np.any(outside):
            d = d.copy()
            g = g.copy()
            o = off[outside]
            dist = np.linalg.norm(o, axis=1)
            d[outside] += dist
            # clamped axes do not move the inner point
            gi = np.where(o != 0.0, 0.0, g[outside])
            g[outside] = gi + o / dist[:, None]
        if single:
            return float(d[0]), g[0]
        return d, g

    def eval(self, p):
        return self.eval_grad(p)[0]

    def grad(self, p):
        return self.eval_grad(p)[1]

    def outside_domain(self, p):
        return ~self.domain.contains(np.asarray(p, dtype=np.float64).reshape(-1, 3))


# ---------------------------------------------------------------- analytic

def _safe_unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.where(n > 0, v / np.where(n > 0, n, 1.0), 0.0), n[..., 0]


class AnalyticField(DistanceField):
    """Exact unsigned distance to a simple shape.

    On the medial set (where the closest point is not unique) and on the
    surface itself the gradient is the zero vector.
    """

    def __init__(self, kind, domain=None, **params):
        self.kind = kind
        self.params = {k: (np.asarray(v, dtype=np.float64) if np.ndim(v) else float(v))
                       for k, v in params.items()}
        fn = getattr(self, f"_{kind.replace('-', '_')}", None)
        if fn is None:
            raise ValueError(f"unknown analytic shape {kind!r}")
        self._fn = fn
        self.domain = domain if domain is not None else self._default_domain()

    def __repr__(self):
        return f"AnalyticField({self.kind!r}, {self.params})"

    def _default_domain(self):
        lo, hi = self._bounds()
        pad = 0.25 * np.linalg.norm(hi - lo)
        return Box(lo - pad, hi + pad)

    def _bounds(self):
        p = self.params
        if self.kind == "sphere":
            return p["center"] - p["radius"], p["center"] + p["radius"]
        if self.kind == "capsule":
            lo = np.minimum(p["a"], p["b"]) - p["radius"]
            return lo, np.maximum(p["a"], p["b"]) + p["radius"]
        if self.kind == "torus":
            e = np.array([p["R"] + p["r"]] * 2 + [p["r"]])
            return p["center"] - e, p["center"] + e
        if self.kind == "open-disk":
            return p["center"] - p["radius"], p["center"] + p["radius"]
        if self.kind == "plate-pair":
            e = np.array([p["half_size"], p["half_size"], p["gap"] / 2])
            return -e, e
        raise ValueError(self.kind)

    def _eval_grad(self, q):
        return self._fn(q, **self.params)

    @staticmethod
    def _sphere(q, center, radius):
        u, r = _safe_unit(q - center)
        s = r - radius
        return np.abs(s), np.sign(s)[:, None] * u

    @staticmethod
    def _capsule(q, a, b, radius):
        ab = b - a
        t = np.clip((q - a) @ ab / (ab @ ab), 0.0, 1.0)
        u, r = _safe_unit(q - (a + t[:, None] * ab))
        s = r - radius
        return np.abs(s), np.sign(s)[:, None] * u

    @staticmethod
    def _torus(q, center, R, r):
        # axis is +z through `center`
        x = q - center
        radial, rho = _safe_unit(x * [1.0, 1.0, 0.0])
        core = center + R * radial
        u, dist = _safe_unit(q - core)
        s = dist - r
        g = np.sign(s)[:, None] * u
        medial = rho == 0
        g[medial] = 0.0
        d = np.abs(s)
        d[medial] = np.abs(np.hypot(R, x[medial, 2]) - r)
        return d, g

    @staticmethod
    def _open_disk(q, center, normal, radius):
        n = normal / np.linalg.norm(normal)
        x = q - center
        h = x @ n
        inplane = x - h[:, None] * n
        dirn, rho = _safe_unit(inplane)
        inside = rho <= radius
        d = np.empty(len(q))
        g = np.empty((len(q), 3))
        d[inside] = np.abs(h[inside])
        g[inside] = np.sign(h[inside])[:, None] * n
        rim = center + radius * dirn[~inside]
        u, dist = _safe_unit(q[~inside] - rim)
        d[~inside] = dist
        g[~inside] = u
        return d, g

    @staticmethod
    def _plate_pair(q, gap, half_size):
        # square plates |x|,|y| <= half_size at z = +-gap/2
        d = np.full(len(q), np.inf)
        g = np.zeros((len(q), 3))
        for zc in (-gap / 2, gap / 2):
            c = np.stack([np.clip(q[:, 0], -half_size, half_size),
                          np.clip(q[:, 1], -half_size, half_size),
                          np.full(len(q), zc)], 1)
            u, dist = _safe_unit(q - c)
            closer = dist < d
            tie = dist == d
            d = np.where(closer, dist, d)
            g[closer] = u[closer]
            g[tie] = 0.0
        return d, g


def sphere(center=(0.0, 0.0, 0.0), radius=1.0, domain=None):
    return AnalyticField("sphere", domain, center=center, radius=radius)


def capsule(a, b, radius, domain=None):
    return AnalyticField("capsule", domain, a=a, b=b, radius=radius)


def torus(center=(0.0, 0.0, 0.0), R=0.6, r=0.25, domain=None):
    return AnalyticField("torus", domain, center=center, R=R, r=r)


def open_disk(center=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), radius=0.5, domain=None):
    return AnalyticField("open-disk", domain, center=center, normal=normal, radius=radius)


def plate_pair(gap=0.2, half_size=0.5, domain=None):
    return AnalyticField("plate-pair", domain, gap=gap, half_size=half_size)


def parse_analytic(spec: str, domain=None) -> AnalyticField:
    """Parse 'sphere:cx,cy,cz,r', 'capsule:ax,ay,az,bx,by,bz,r',
    'torus:cx,cy,cz,R,r', 'open-disk:cx,cy,cz,nx,ny,nz,r' or
    'plate-pair:gap,half_size'."""
    try:
        kind, args = spec.split(":", 1)
        vals = [float(x) for x in args.split(",")]
        if kind == "sphere" and len(vals) == 4:
            return sphere(vals[:3], vals[3], domain)
        if kind == "capsule" and len(vals) == 7:
            return capsule(vals[:3], vals[3:6], vals[6], domain)
        if kind == "torus" and len(vals) == 5:
            return torus(vals[:3], vals[3], vals[4], domain)
        if kind == "open-disk" and len(vals) == 7:
            return open_disk(vals[:3], vals[3:6], vals[6], domain)
        if kind == "plate-pair" and len(vals) == 2:
            return plate_pair(vals[0], vals[1], domain)
    except ValueError:
        pass
    raise ValueError(f"bad analytic field spec {spec!r}")


# -------------------------------------------------------------------- grid

class GridField(DistanceField):
    """Trilinear interpolation of distances stored on a regular grid.

    `values` has shape (nz, ny, nx) so that the flat C-order buffer is
    x-fastest.
    """

    def __init__(self, values, origin, spacing):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 3 or min(values.shape) < 2:
            raise ValueError("grid needs at least 2 nodes per axis")
        self.values = np.maximum(values, 0.0)
        self.values.setflags(write=False)
        self.origin = np.asarray(origin, dtype=np.float64).reshape(3)
        self.spacing = np.broadcast_to(np.asarray(spacing, dtype=np.float64), (3,)).copy()
        self.dims = tuple(int(x) for x in values.shape[::-1])  # (nx, ny, nz)
        self.domain = Box(self.origin, self.origin + self.spacing * (np.array(self.dims) - 1))
        self._v = self.values.astype(np.float64)

    def node_positions(self):
        nx, ny, nz = self.dims
        axes = [self.origin[a] + self.spacing[a] * np.arange(n) for a, n in enumerate((nx, ny, nz))]
        zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        return np.stack([xx, yy, zz], -1)

    def _cell(self, u, n):
        i = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
        return i, u - i

    def _eval_grad(self, q):
        u = (q - self.origin) / self.spacing
        dims = np.array(self.dims)
        idx, frac = [], []
        for a in range(3):
            i, f = self._cell(u[:, a], dims[a])
            idx.append(i)
            frac.append(f)
        d, g = self._trilinear(idx, frac)
        # across a cell face the own-axis derivative jumps; average both sides
        for a in range(3):
            on_face = (frac[a] == 0.0) & (idx[a] > 0)
            if np.any(on_face):
                idx2 = [x[on_face] for x in idx]
                frac2 = [x[on_face] for x in frac]
                idx2[a] = idx2[a] - 1
                frac2[a] = np.ones(on_face.sum())
                _, g2 = self._trilinear(idx2, frac2)
                g[on_face, a] = 0.5 * (g[on_face, a] + g2[:, a])
        return d, g

    def _trilinear(self, idx, frac):
        i, j, k = idx
        fx, fy, fz = frac
        v = self._v
        c000 = v[k, j, i]
        c100 = v[k, j, i + 1]
        c010 = v[k, j + 1, i]
        c110 = v[k, j + 1, i + 1]
        c001 = v[k + 1, j, i]
        c101 = v[k + 1, j, i + 1]
        c011 = v[k + 1, j + 1, i]
        c111 = v[k + 1, j + 1, i + 1]
        c00 = c000 + (c100 - c000) * fx
        c10 = c010 + (c110 - c010) * fx
        c01 = c001 + (c101 - c001) * fx
        c11 = c011 + (c111 - c011) * fx
        c0 = c00 + (c10 - c00) * fy
        c1 = c01 + (c11 - c01) * fy
        d = c0 + (c1 - c0) * fz
        dx0 = (c100 - c000) + ((c110 - c010) - (c100 - c000)) * fy
        dx1 = (c101 - c001) + ((c111 - c011) - (c101 - c001)) * fy
        gx = dx0 + (dx1 - dx0) * fz
        gy = (c10 - c00) + ((c11 - c01) - (c10 - c00)) * fz
        gz = c1 - c0
        g = np.stack([gx, gy, gz], 1) / self.spacing
        return d, g


def voxelize(index, dims, domain: Box) -> GridField:
    """Sample the exact unsigned distance of `index` at grid nodes spanning
    `domain` (node-aligned: first and last nodes lie on the box faces)."""
    dims = tuple(int(n) for n in np.broadcast_to(dims, (3,)))
    if min(dims) < 2:
        raise ValueError("dims must be >= 2 per axis")
    spacing = domain.extent / (np.array(dims) - 1)
    g = GridField(np.zeros(dims[::-1], dtype=np.float32), domain.lo, spacing)
    nodes = g.node_positions().reshape(-1, 3)
    vals = index.batch_unsigned_distance(nodes).astype(np.float32)
    return GridField(vals.reshape(dims[::-1]), domain.lo, spacing)


def save_grid(field: GridField, path):
    """Write `<name>.nhdr` plus a raw little-endian float32 data file."""
    path = Path(path)
    if path.suffix != ".nhdr":
        path = path.with_suffix(".nhdr")
    raw = path.with_suffix(".raw")
    header = (
        "NUDF grid\n"
        f"dims: {' '.join(str(n) for n in field.dims)}\n"
        f"spacing: {' '.join(repr(float(s)) for s in field.spacing)}\n"
        f"origin: {' '.join(repr(float(o)) for o in field.origin)}\n"
        f"datafile: {raw.name}\n"
    )
    path.write_text(header)
    raw.write_bytes(field.values.astype("<f4").tobytes())
    return path


def load_grid(path) -> GridField:
    path = Path(path)
    keys = {}
    for line in path.read_text().splitlines()[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            keys[k.strip()] = v.strip()
    try:
        dims = [int(x) for x in keys["dims"].split()]
        spacing = [float(x) for x in keys["spacing"].split()]
        origin = [float(x) for x in keys["origin"].split()]
        datafile = path.parent / keys["datafile"]
    except (KeyError, ValueError) as e:
        raise FormatError(f"bad grid header {path}: {e}") from None
    data = datafile.read_bytes()
    need = 4 * int(np.prod(dims))
    if len(data) < need:
        raise TruncatedFileError(f"grid data {datafile} truncated", offset=len(data))
    vals = np.frombuffer(data, dtype="<f4", count=int(np.prod(dims)))
    return GridField(vals.reshape(dims[::-1]), origin, spacing)

"""PLY (ascii / binary little-endian) and OBJ reading and writing."""
from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from .errors import DegenerateTriangleWarning, EmptyInputError, FormatError, TruncatedFileError
from .geometry import PointCloud, TriangleMesh, WORLD_MM, clean_mesh

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

MESH_FORMATS = ("ply-ascii", "ply-binary", "obj")


class _Element:
    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.props = []  # (name, dtype) or (name, ("list", count_dtype, item_dtype))

    def is_fixed(self):
        return all(not isinstance(t, tuple) for _, t in self.props)


def _parse_header(data):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise FormatError("not a PLY file", offset=0)
    nl = data.find(b"\n", end)
    if nl < 0:
        raise TruncatedFileError("PLY header not terminated", offset=end)
    body = nl + 1
    fmt = None
    elements = []
    offset = 0
    for raw in data[:end].split(b"\n"):
        line = raw.decode("ascii", errors="replace").strip()
        words = line.split()
        if not words or words[0] in ("ply", "comment", "obj_info"):
            pass
        elif words[0] == "format":
            fmt = words[1] if len(words) > 1 else None
        elif words[0] == "element" and len(words) == 3:
            elements.append(_Element(words[1], int(words[2])))
        elif words[0] == "property" and elements:
            try:
                if words[1] == "list":
                    elements[-1].props.append(
                        (words[4], ("list", _PLY_TYPES[words[2]], _PLY_TYPES[words[3]])))
                else:
                    elements[-1].props.append((words[2], _PLY_TYPES[words[1]]))
            except (KeyError, IndexError):
                raise FormatError(f"bad property line {line!r}", offset=offset) from None
        else:
            raise FormatError(f"unexpected header line {line!r}", offset=offset)
        offset += len(raw) + 1
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}", offset=0)
    return fmt, elements, body


def _read_binary(data, pos, el):
    if el.is_fixed():
        dt = np.dtype([(n, "<" + t) for n, t in el.props])
        need = dt.itemsize * el.count
        if pos + need > len(data):
            raise TruncatedFileError(f"element {el.name!r} truncated", offset=len(data))
        arr = np.frombuffer(data, dtype=dt, count=el.count, offset=pos)
        return {n: arr[n] for n, _ in el.props}, pos + need
    # Faces: try the common uniform-triangle layout first.
    if len(el.props) == 1:
        name, (_, ct, it) = el.props[0]
        dt = np.dtype([("n", "<" + ct), ("i", "<" + it, (3,))])
        need = dt.itemsize * el.count
        if pos + need <= len(data) and el.count > 0:
            arr = np.frombuffer(data, dtype=dt, count=el.count, offset=pos)
            if np.all(arr["n"] == 3):
                return {name: arr["i"].astype(np.int64)}, pos + need
    out = {n: [] for n, _ in el.props}
    for _ in range(el.count):
        for n, t in el.props:
            if isinstance(t, tuple):
                ct, it = np.dtype("<" + t[1]), np.dtype("<" + t[2])
                if pos + ct.itemsize > len(data):
                    raise TruncatedFileError(f"element {el.name!r} truncated", offset=pos)
                k = int(np.frombuffer(data, ct, 1, pos)[0])
                pos += ct.itemsize
                if pos + k * it.itemsize > len(data):
                    raise TruncatedFileError(f"element {el.name!r} truncated", offset=pos)
                out[n].append(np.frombuffer(data, it, k, pos).astype(np.int64))
                pos += k * it.itemsize
            else:
                dt = np.dtype("<" + t)
                if pos + dt.itemsize > len(data):
                    raise TruncatedFileError(f"element {el.name!r} truncated", offset=pos)
                out[n].append(np.frombuffer(data, dt, 1, pos)[0])
                pos += dt.itemsize
    return out, pos


def _read_ascii(data, pos, elements):
    result = {}
    # byte offset of every line start, for error reporting
    for el in elements:
        cols = {n: [] for n, _ in el.props}
        for _ in range(el.count):
            nl = data.find(b"\n", pos)
            if nl < 0:
                nl = len(data)
            line = data[pos:nl]
            if pos >= len(data):
                raise TruncatedFileError(f"element {el.name!r} truncated", offset=pos)
            words = line.split()
            try:
                i = 0
                for n, t in el.props:
                    if isinstance(t, tuple):
                        k = int(words[i])
                        cols[n].append(np.array([int(w) for w in words[i + 1:i + 1 + k]], dtype=np.int64))
                        if len(cols[n][-1]) != k:
                            raise ValueError
                        i += 1 + k
                    else:
                        cols[n].append(float(words[i]) if t[0] == "f" else int(words[i]))
                        i += 1
            except (ValueError, IndexError):
                raise FormatError(f"malformed {el.name} record {line[:60]!r}", offset=pos) from None
            pos = nl + 1
        result[el.name] = cols
    return result


def read_ply(path):
    """Return {element: {property: values}} for a PLY file."""
    data = Path(path).read_bytes()
    fmt, elements, pos = _parse_header(data)
    if fmt == "ascii":
        return _read_ascii(data, pos, elements), elements
    result = {}
    for el in elements:
        result[el.name], pos = _read_binary(data, pos, el)
    return result, elements


def _faces_array(face_cols):
    key = "vertex_indices" if "vertex_indices" in face_cols else (
        "vertex_index" if "vertex_index" in face_cols else None)
    if key is None:
        raise FormatError("face element has no vertex_indices property")
    faces = face_cols[key]
    if isinstance(faces, np.ndarray):
        return faces.reshape(-1, 3)
    tris = []
    for f in faces:
        f = np.asarray(f, dtype=np.int64)
        if len(f) < 3:
            continue
        # triangulate polygons as fans
        for k in range(1, len(f) - 1):
            tris.append((f[0], f[k], f[k + 1]))
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def _vertex_xyz(cols):
    try:
        return np.stack([np.asarray(cols[a], dtype=np.float32) for a in "xyz"], axis=1)
    except KeyError:
        raise FormatError("vertex element lacks x/y/z") from None


def _load_ply_mesh(path):
    res, _ = read_ply(path)
    if "vertex" not in res:
        raise FormatError("PLY has no vertex element")
    v = _vertex_xyz(res["vertex"])
    f = _faces_array(res["face"]) if "face" in res else np.zeros((0, 3), np.int64)
    return v, f


def _load_obj(path):
    verts, faces = [], []
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.split(b"#", 1)[0].strip()
            if line.startswith(b"v "):
                try:
                    x, y, z = (float(w) for w in line.split()[1:4])
                except ValueError:
                    raise FormatError(f"malformed vertex {raw[:60]!r}", offset=offset) from None
                verts.append((x, y, z))
            elif line.startswith(b"f "):
                try:
                    idx = [int(w.split(b"/")[0]) for w in line.split()[1:]]
                except ValueError:
                    raise FormatError(f"malformed face {raw[:60]!r}", offset=offset) from None
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
            offset += len(raw)
    # vertices are stored as float32 like PLY, so every format round-trips alike
    v = np.asarray(verts, dtype=np.float32).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and (f.min() < 0 or f.max() >= len(v)):
        raise FormatError("face index out of range")
    return v, f


def load_mesh(path) -> TriangleMesh:
    """Load a .ply or .obj triangle mesh and clean it.

    Zero-area triangles and unreferenced vertices are dropped; a
    DegenerateTriangleWarning carries the number of dropped faces.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such mesh file: {path}")
    ext = path.suffix.lower()
    if ext == ".ply":
        v, f = _load_ply_mesh(path)
    elif ext == ".obj":
        v, f = _load_obj(path)
    else:
        raise FormatError(f"unsupported mesh extension {ext!r}")
    if len(f) and (f.min() < 0 or f.max() >= len(v)):
        raise FormatError("face index out of range")
    if len(f) == 0:
        raise EmptyInputError(f"{path} contains no faces")
    mesh, dropped = clean_mesh(v, f, WORLD_MM)
    if dropped:
        warnings.warn(DegenerateTriangleWarning(dropped), stacklevel=2)
    if mesh.is_empty():
        raise EmptyInputError(f"{path} contains only degenerate faces")
    return mesh


def _check_path(path):
    if path is None or str(path) == "":
        raise OSError("empty output path")
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise OSError(f"directory does not exist: {path.parent}")
    return path


def _ply_header(fmt, n_vertex, vertex_props, n_face=None):
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {n_vertex}"]
    lines += [f"property {t} {n}" for n, t in vertex_props]
    if n_face is not None:
        lines += [f"element face {n_face}", "property list uchar int vertex_indices"]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def _fmt(x):
    return format(float(x), ".9g")


def save_mesh(mesh: TriangleMesh, path, format="ply-binary"):
    path = _check_path(path)
    v = mesh.vertices.astype(np.float32)
    t = mesh.triangles.astype(np.int32)
    if format == "obj":
        with open(path, "w") as fh:
            for x, y, z in v:
                fh.write(f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}\n")
            for a, b, c in t + 1:
                fh.write(f"f {a} {b} {c}\n")
        return
    props = [("x", "float"), ("y", "float"), ("z", "float")]
    if format == "ply-binary":
        header = _ply_header("binary_little_endian", len(v), props, len(t))
        faces = np.zeros(len(t), dtype=np.dtype([("n", "u1"), ("i", "<i4", (3,))]))
        faces["n"] = 3
        faces["i"] = t
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(v.astype("<f4").tobytes())
            fh.write(faces.tobytes())
    elif format == "ply-ascii":
        header = _ply_header("ascii", len(v), props, len(t))
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write("".join(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n" for x, y, z in v).encode())
            fh.write("".join(f"3 {a} {b} {c}\n" for a, b, c in t).encode())
    else:
        raise ValueError(f"unknown mesh format {format!r}; expected one of {MESH_FORMATS}")


def save_point_cloud(cloud: PointCloud, path, binary=True):
    """Write a PLY point cloud; normals and scalar attributes become vertex
    properties (float32)."""
    path = _check_path(path)
    cols = [("x", cloud.points[:, 0]), ("y", cloud.points[:, 1]), ("z", cloud.points[:, 2])]
    if cloud.normals is not None:
        cols += [("nx", cloud.normals[:, 0]), ("ny", cloud.normals[:, 1]), ("nz", cloud.normals[:, 2])]
    for name, values in cloud.attributes.items():
        cols.append((name, np.asarray(values, dtype=np.float64).reshape(-1)))
    props = [(n, "float") for n, _ in cols]
    dt = np.dtype([(n, "<f4") for n, _ in cols])
    rec = np.zeros(len(cloud), dtype=dt)
    for n, c in cols:
        rec[n] = c
    with open(path, "wb") as fh:
        if binary:
            fh.write(_ply_header("binary_little_endian", len(cloud), props))
            fh.write(rec.tobytes())
        else:
            fh.write(_ply_header("ascii", len(cloud), props))
            for r in rec:
                fh.write((" ".join(_fmt(x) for x in r) + "\n").encode())


def load_point_cloud(path) -> PointCloud:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such point cloud: {path}")
    res, elements = read_ply(path)
    if "vertex" not in res:
        raise FormatError("PLY has no vertex element")
    cols = res["vertex"]
    pts = _vertex_xyz(cols).astype(np.float64)
    normals = None
    if all(k in cols for k in ("nx", "ny", "nz")):
        normals = np.stack([np.asarray(cols[k], dtype=np.float64) for k in ("nx", "ny", "nz")], axis=1)
    attrs = {k: np.asarray(v, dtype=np.float64) for k, v in cols.items()
             if k not in ("x", "y", "z", "nx", "ny", "nz")}
    return PointCloud(pts, normals, attrs)


def ply_binary_size(n_vertices, n_triangles):
    """Expected size in bytes of a binary mesh PLY written by save_mesh."""
    header = _ply_header("binary_little_endian", n_vertices,
                         [("x", "float"), ("y", "float"), ("z", "float")], n_triangles)
    return len(header) + 12 * n_vertices + 13 * n_triangles

"""PLY reader/writer for triangle meshes and point clouds.

Supports ascii and binary_little_endian, scalar vertex properties, and a
single `vertex_indices` list property for faces. Point clouds may carry a
float "dist" channel or uchar red/green/blue; coordinates are stored as
32-bit floats, the common interchange precision.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .mesh import PointCloud, TriangleMesh

_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def save_mesh_ply(mesh: TriangleMesh, path, binary: bool = True) -> None:
    _write_ply(path, binary, mesh.vertices, extra=None, faces=mesh.triangles)


def save_cloud_ply(cloud: PointCloud, path, binary: bool = True) -> None:
    """Write points; a values channel is emitted as a float "dist" property."""
    extra = None
    if cloud.values is not None:
        extra = [("dist", "f4", cloud.values)]
    _write_ply(path, binary, cloud.points, extra=extra, faces=None)


def save_colored_cloud_ply(cloud: PointCloud, colors: np.ndarray, path, binary: bool = True) -> None:
    """Write points with uchar red/green/blue columns (N, 3); a values
    channel, when present, is kept as a float "dist" property."""
    colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
    if len(colors) != len(cloud):
        raise DataError("color count does not match point count")
    extra = []
    if cloud.values is not None:
        extra.append(("dist", "f4", cloud.values))
    extra += [("red", "u1", colors[:, 0]), ("green", "u1", colors[:, 1]),
              ("blue", "u1", colors[:, 2])]
    _write_ply(path, binary, cloud.points, extra=extra, faces=None)


def load_mesh_ply(path) -> TriangleMesh:
    vertex, faces = _read_ply(path)
    if faces is None:
        raise DataError("PLY file has no face element; expected a mesh")
    pts = np.stack([vertex[c].astype(np.float64) for c in ("x", "y", "z")], axis=1)
    return TriangleMesh(pts, faces)


def load_cloud_ply(path) -> PointCloud:
    vertex, _ = _read_ply(path)
    pts = np.stack([vertex[c].astype(np.float64) for c in ("x", "y", "z")], axis=1)
    values = None
    if "dist" in vertex.dtype.names:
        values = vertex["dist"].astype(np.float64)
    return PointCloud(pts, values)


def _write_ply(path, binary, points, extra, faces) -> None:
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    cols = [("x", "f4", points[:, 0]), ("y", "f4", points[:, 1]), ("z", "f4", points[:, 2])]
    if extra:
        cols += [(name, code, np.asarray(vals)) for name, code, vals in extra]
    fmt = "binary_little_endian" if binary else "ascii"
    header = ["ply", f"format {fmt} 1.0", f"element vertex {len(points)}"]
    header += [f"property {_ply_name(code)} {name}" for name, code, _ in cols]
    if faces is not None:
        header += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")

    vdtype = np.dtype([(name, "<" + code) for name, code, _ in cols])
    vdata = np.empty(len(points), dtype=vdtype)
    for name, _, vals in cols:
        vdata[name] = vals

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(vdata.tobytes())
            if faces is not None:
                fdtype = np.dtype([("n", "u1"), ("a", "<i4"), ("b", "<i4"), ("c", "<i4")])
                fdata = np.empty(len(faces), dtype=fdtype)
                fdata["n"] = 3
                fdata["a"], fdata["b"], fdata["c"] = faces[:, 0], faces[:, 1], faces[:, 2]
                fh.write(fdata.tobytes())
        else:
            lines = []
            for row in vdata:
                lines.append(" ".join(_fmt_ascii(row[name], code) for name, code, _ in cols))
            if faces is not None:
                lines += [f"3 {a} {b} {c}" for a, b, c in np.asarray(faces)]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


def _ply_name(code: str) -> str:
    return {"f4": "float", "f8": "double", "u1": "uchar", "i4": "int"}[code]


def _fmt_ascii(value, code: str) -> str:
    if code in ("f4", "f8"):
        return format(float(value), ".9g")
    return str(int(value))


def _read_ply(path):
    """Return (vertex structured array, faces int64 (T,3) or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        end = blob.index(b"end_header")
    except ValueError:
        raise DataError("not a PLY file (no end_header)") from None
    body_start = blob.index(b"\n", end) + 1
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    if not header or header[0].strip() != "ply":
        raise DataError("not a PLY file (bad magic)")

    fmt = None
    elements = []  # (name, count, [(prop_name, dtype_code) ...], list_spec or None)
    for line in header[1:]:
        parts = line.strip().split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append([parts[1], int(parts[2]), [], None])
        elif parts[0] == "property":
            if not elements:
                raise DataError("PLY property before any element")
            if parts[1] == "list":
                elements[-1][3] = (_DTYPES[parts[2]], _DTYPES[parts[3]], parts[4])
            else:
                elements[-1][2].append((parts[2], _DTYPES[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise DataError(f"unsupported PLY format {fmt!r}")

    vertex = None
    faces = None
    offset = body_start
    ascii_rows = blob[body_start:].decode("ascii", errors="replace").split("\n") if fmt == "ascii" else None
    row_at = 0
    for name, count, props, list_spec in elements:
        if list_spec is None:
            dtype = np.dtype([(p, "<" + c) for p, c in props])
            if fmt == "ascii":
                rows = ascii_rows[row_at:row_at + count]
                row_at += count
                data = np.zeros(count, dtype=dtype)
                for i, row in enumerate(rows):
                    vals = row.split()
                    for (p, c), v in zip(props, vals):
                        data[p][i] = float(v) if c.startswith("f") else int(v)
            else:
                data = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).copy()
                offset += dtype.itemsize * count
            if name == "vertex":
                vertex = data
        else:
            count_code, item_code, _ = list_spec
            if fmt == "ascii":
                rows = ascii_rows[row_at:row_at + count]
                row_at += count
                tris = []
                for row in rows:
                    vals = row.split()
                    n = int(vals[0])
                    if n != 3:
                        raise DataError("only triangle faces are supported")
                    tris.append([int(v) for v in vals[1:4]])
                data = np.array(tris, dtype=np.int64).reshape(-1, 3)
            else:
                cs = np.dtype("<" + count_code).itemsize
                it = np.dtype("<" + item_code).itemsize
                row_size = cs + 3 * it
                raw = blob[offset:offset + row_size * count]
                if len(raw) < row_size * count:
                    raise DataError("PLY face payload truncated")
                counts = np.frombuffer(raw, dtype="<" + count_code).reshape(count, -1)[:, 0] \
                    if count else np.zeros(0)
                rows = np.frombuffer(raw, dtype=np.uint8).reshape(count, row_size) if count else None
                if count and not (counts == 3).all():
                    raise DataError("only triangle faces are supported")
                if count:
                    items = rows[:, cs:].copy().view("<" + item_code).reshape(count, 3)
                    data = items.astype(np.int64)
                else:
                    data = np.zeros((0, 3), dtype=np.int64)
                offset += row_size * count
            if name == "face":
                faces = data
    if vertex is None:
        raise DataError("PLY file has no vertex element")
    for c in ("x", "y", "z"):
        if c not in vertex.dtype.names:
            raise DataError(f"PLY vertex element missing property {c!r}")
    return vertex, faces

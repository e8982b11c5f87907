"""Triangle meshes, point clouds, and poses in the normalized unit-cube frame."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Immutable indexed triangle mesh. Vertices are float64 (V, 3),
    triangles int64 (T, 3) indices into the vertex array."""

    vertices: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise DataError("triangle index out of range")
        if v.size and not np.isfinite(v).all():
            raise DataError("non-finite vertex coordinate")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        v.flags.writeable = False
        t.flags.writeable = False

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def triangle_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = self.triangles
        return self.vertices[t[:, 0]], self.vertices[t[:, 1]], self.vertices[t[:, 2]]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def drop_degenerate(self, eps: float = 0.0) -> "TriangleMesh":
        """Remove zero-area triangles (construction cleanup)."""
        if self.is_empty:
            return self
        keep = self.triangle_areas() > eps
        return TriangleMesh(self.vertices, self.triangles[keep])


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable point set; `values` is an optional per-point scalar channel
    (nearest-surface distance, for visualization)."""

    points: np.ndarray = field(repr=False)
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        if p.size and not np.isfinite(p).all():
            raise DataError("non-finite point coordinate")
        object.__setattr__(self, "points", p)
        p.flags.writeable = False
        if self.values is not None:
            v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).ravel())
            if v.shape[0] != p.shape[0]:
                raise DataError("values length does not match point count")
            object.__setattr__(self, "values", v)
            v.flags.writeable = False

    def __len__(self) -> int:
        return len(self.points)

    def with_values(self, values: np.ndarray) -> "PointCloud":
        return PointCloud(self.points, values)


@dataclass(frozen=True)
class Pose:
    """Viewing pose: azimuth about the up axis (+z), elevation about the
    right axis (+y), both in degrees."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not 0.0 <= self.azimuth < 360.0:
            raise DataError(f"azimuth {self.azimuth} outside [0, 360)")
        if not 0.0 <= self.elevation < 50.0:
            raise DataError(f"elevation {self.elevation} outside [0, 50)")

    def rotation_matrix(self) -> np.ndarray:
        """Right-handed rotation: azimuth about +z first, then elevation
        about +y. Trig values within 1e-12 of an integer are snapped so
        90-degree multiples compose exactly."""
        rz = _axis_rotation(2, self.azimuth)
        ry = _axis_rotation(1, self.elevation)
        return ry @ rz


def _axis_rotation(axis: int, degrees: float) -> np.ndarray:
    c = np.cos(np.radians(degrees))
    s = np.sin(np.radians(degrees))
    c = round(c) if abs(c - round(c)) < 1e-12 else c
    s = round(s) if abs(s - round(s)) < 1e-12 else s
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    m = np.eye(3)
    m[i, i] = c
    m[j, j] = c
    m[i, j] = -s
    m[j, i] = s
    return m


def normalize_unit_cube(mesh: TriangleMesh) -> TriangleMesh:
    """Center the mesh bounding box in [0,1]^3 and scale its longest side to 1,
    preserving aspect ratio."""
    if len(mesh.vertices) == 0:
        raise DataError("empty shape")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DataError("all vertices coincident; cannot normalize")
    center = (lo + hi) / 2.0
    verts = (mesh.vertices - center) / extent + 0.5
    return TriangleMesh(verts, mesh.triangles)


def rotate_mesh(mesh: TriangleMesh, pose: Pose) -> TriangleMesh:
    """Rotate vertices by the pose and re-normalize to the unit cube.
    Connectivity is unchanged. Callers pass normalized meshes (the pipeline
    normalizes at load), so the identity pose is an exact no-op."""
    if len(mesh.vertices) == 0:
        raise DataError("empty shape")
    rot = pose.rotation_matrix()
    if np.array_equal(rot, np.eye(3)):
        # identity rotation of a normalized mesh is a no-op; skipping the
        # re-normalization keeps identity-pose grids bit-equal
        return mesh
    verts = mesh.vertices @ rot.T
    return normalize_unit_cube(TriangleMesh(verts, mesh.triangles))


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> PointCloud:
    """Draw n points on the surface, triangle picked with probability
    proportional to area, uniform within each triangle. Deterministic for a
    fixed seed."""
    if n < 1:
        raise DataError(f"sample count must be >= 1, got {n}")
    if mesh.is_empty:
        raise DataError("degenerate mesh: no triangles to sample")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0.0:
        raise DataError("degenerate mesh: zero total surface area")
    rng = np.random.Generator(np.random.PCG64(seed))
    counts = rng.multinomial(n, areas / total)
    a, b, c = mesh.triangle_corners()
    pieces = []
    for ti in np.nonzero(counts)[0]:
        k = counts[ti]
        u = rng.random((k, 1))
        v = rng.random((k, 1))
        su = np.sqrt(u)
        pieces.append((1.0 - su) * a[ti] + su * (1.0 - v) * b[ti] + su * v * c[ti])
    return PointCloud(np.concatenate(pieces, axis=0))


def mesh_edges(mesh: TriangleMesh) -> np.ndarray:
    """All undirected edges, one row per triangle edge (3T, 2), sorted within rows."""
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=0)
    return np.sort(e, axis=1)


def is_watertight(mesh: TriangleMesh) -> bool:
    """True iff every undirected edge is shared by exactly two triangles."""
    if mesh.is_empty:
        return False
    edges = mesh_edges(mesh)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool((counts == 2).all())


def euler_characteristic(mesh: TriangleMesh) -> int:
    """V - E + F over referenced vertices and unique undirected edges."""
    nv = len(np.unique(mesh.triangles))
    ne = len(np.unique(mesh_edges(mesh), axis=0))
    nf = len(mesh.triangles)
    return nv - ne + nf


def signed_volume(mesh: TriangleMesh) -> float:
    """Signed enclosed volume by the divergence theorem; positive for
    consistently outward-wound closed surfaces."""
    a, b, c = mesh.triangle_corners()
    return float(np.einsum("ij,ij->", a, np.cross(b, c)) / 6.0)

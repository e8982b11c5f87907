"""Procedural synthetic shape classes: a small, fully deterministic dataset.

Eight closed-mesh families (boxes, plates, brackets, tubes, ellipsoids,
discs). Every class parameter is a ratio of extents, so shapes stay
distinguishable after unit-cube normalization erases absolute scale; each
parameter's class-wide band is wide enough that disjoint sub-bands produce
well-separated shapes (the contamination experiment depends on this).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .mesh import TriangleMesh, normalize_unit_cube

_SEGMENTS = 48
_RINGS = 24


@dataclass(frozen=True)
class ShapeSpec:
    """Generation recipe for one shape instance: class label, primitive
    recipe name, per-parameter jitter bounds, and the seed that resolves
    them. Equal specs generate bit-identical meshes."""

    class_label: str
    recipe: str
    bounds: dict[str, tuple[float, float]] = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        if self.recipe not in _RECIPES:
            raise DataError(f"unknown recipe {self.recipe!r}")
        expected = sorted(CLASS_BANDS[self.recipe])
        if sorted(self.bounds) != expected:
            raise DataError(f"recipe {self.recipe!r} expects parameters {expected}")
        for name, (lo, hi) in self.bounds.items():
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise DataError(f"bad bounds for {name!r}: ({lo}, {hi})")


def generate_synthetic(spec: ShapeSpec) -> TriangleMesh:
    """Deterministic mesh for a ShapeSpec: parameters drawn uniformly within
    their bounds from the ShapeSpec's seed, then built and unit-cube
    normalized."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    params = {}
    for name in sorted(spec.bounds):
        lo, hi = spec.bounds[name]
        params[name] = lo + (hi - lo) * rng.random()
    mesh = _RECIPES[spec.recipe](**params)
    return normalize_unit_cube(mesh)


# Class-wide parameter bands. Ratios are kept away from 0 and 1 so shapes
# stay solid at desk resolutions and inside the unit cube.
CLASS_BANDS: dict[str, dict[str, tuple[float, float]]] = {
    "box": {"ay": (0.25, 0.75), "az": (0.25, 0.75)},
    "slab": {"ay": (0.55, 0.90), "az": (0.08, 0.28)},
    "lbracket": {"w": (0.30, 0.70), "h": (0.30, 0.70)},
    "tbracket": {"sw": (0.20, 0.55), "bh": (0.20, 0.55)},
    "cross": {"w": (0.20, 0.55), "az": (0.30, 0.80)},
    "tube": {"hz": (0.55, 0.95), "bore": (0.25, 0.75)},
    "ellipsoid": {"ay": (0.35, 0.95), "az": (0.35, 0.95)},
    "disc": {"t": (0.12, 0.42), "ey": (0.55, 0.95)},
}

DEFAULT_CLASSES = tuple(CLASS_BANDS)


def class_bounds(recipe: str, window: tuple[float, float] = (0.0, 1.0)) -> dict:
    """Jitter bounds for one instance: each class band narrowed to the given
    latent window (used to carve disjoint train/test parameter ranges)."""
    w0, w1 = window
    if not 0.0 <= w0 <= w1 <= 1.0:
        raise DataError(f"latent window must satisfy 0 <= w0 <= w1 <= 1, got {window}")
    out = {}
    for name, (lo, hi) in CLASS_BANDS[recipe].items():
        span = hi - lo
        out[name] = (lo + span * w0, lo + span * w1)
    return out


def _merge(meshes: list[TriangleMesh]) -> TriangleMesh:
    verts = []
    tris = []
    base = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + base)
        base += len(m.vertices)
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def _box(lo, hi) -> TriangleMesh:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=np.float64)
    verts = lo + corners * (hi - lo)
    tris = np.array([
        [0, 2, 3], [0, 3, 1],  # -z
        [4, 5, 7], [4, 7, 6],  # +z
        [0, 1, 5], [0, 5, 4],  # -y
        [2, 6, 7], [2, 7, 3],  # +y
        [0, 4, 6], [0, 6, 2],  # -x
        [1, 3, 7], [1, 7, 5],  # +x
    ], dtype=np.int64)
    return TriangleMesh(verts, tris)


def _ring(rx: float, ry: float, z: float, n: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(n) / n
    return np.stack([rx * np.cos(theta), ry * np.sin(theta), np.full(n, float(z))], axis=1)


def _side_quads(bottom, top, n, flip=False):
    j = np.arange(n)
    j1 = (j + 1) % n
    t1 = np.stack([bottom + j, bottom + j1, top + j1], axis=1)
    t2 = np.stack([bottom + j, top + j1, top + j], axis=1)
    tris = np.concatenate([t1, t2])
    return tris[:, ::-1] if flip else tris


def _elliptic_cylinder(rx: float, ry: float, z0: float, z1: float, n: int = _SEGMENTS) -> TriangleMesh:
    verts = np.concatenate([
        _ring(rx, ry, z0, n), _ring(rx, ry, z1, n),
        [[0.0, 0.0, z0], [0.0, 0.0, z1]],
    ])
    j = np.arange(n)
    j1 = (j + 1) % n
    side = _side_quads(0, n, n)
    bottom = np.stack([np.full(n, 2 * n), j1, j], axis=1)
    top = np.stack([np.full(n, 2 * n + 1), n + j, n + j1], axis=1)
    return TriangleMesh(verts, np.concatenate([side, bottom, top]).astype(np.int64))


def _tube(rx: float, ry: float, bore: float, z0: float, z1: float, n: int = _SEGMENTS) -> TriangleMesh:
    qx, qy = bore * rx, bore * ry
    verts = np.concatenate([
        _ring(rx, ry, z0, n), _ring(rx, ry, z1, n),
        _ring(qx, qy, z0, n), _ring(qx, qy, z1, n),
    ])
    j = np.arange(n)
    j1 = (j + 1) % n
    outer = _side_quads(0, n, n)
    inner = _side_quads(2 * n, 3 * n, n, flip=True)
    bottom = np.concatenate([
        np.stack([j, 2 * n + j, 2 * n + j1], axis=1),
        np.stack([j, 2 * n + j1, j1], axis=1),
    ])
    top = np.concatenate([
        np.stack([n + j, n + j1, 3 * n + j1], axis=1),
        np.stack([n + j, 3 * n + j1, 3 * n + j], axis=1),
    ])
    return TriangleMesh(verts, np.concatenate([outer, inner, bottom, top]).astype(np.int64))


def _ellipsoid(a: float, b: float, c: float, rings: int = _RINGS, segs: int = _SEGMENTS) -> TriangleMesh:
    phi = np.pi * np.arange(1, rings) / rings
    theta = 2.0 * np.pi * np.arange(segs) / segs
    sp, cp = np.sin(phi)[:, None], np.cos(phi)[:, None]
    st, ct = np.sin(theta)[None, :], np.cos(theta)[None, :]
    band = np.stack([a * sp * ct, b * sp * st, c * cp * np.ones_like(st)], axis=-1).reshape(-1, 3)
    verts = np.concatenate([[[0.0, 0.0, c]], band, [[0.0, 0.0, -c]]])

    def vid(i, j):  # ring i in [0, rings-2], segment j
        return 1 + i * segs + (j % segs)

    tris = []
    for j in range(segs):
        tris.append([0, vid(0, j), vid(0, j + 1)])
        tris.append([len(verts) - 1, vid(rings - 2, j + 1), vid(rings - 2, j)])
    for i in range(rings - 2):
        for j in range(segs):
            tris.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)])
            tris.append([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return TriangleMesh(verts, np.asarray(tris, dtype=np.int64))


def _make_box(ay: float, az: float) -> TriangleMesh:
    return _box((0, 0, 0), (1, ay, az))


def _make_slab(ay: float, az: float) -> TriangleMesh:
    return _box((0, 0, 0), (1, ay, az))


def _make_lbracket(w: float, h: float) -> TriangleMesh:
    return _merge([
        _box((0, 0, 0), (w, 1, 0.5)),
        _box((0, 0, 0), (1, h, 0.5)),
    ])


def _make_tbracket(sw: float, bh: float) -> TriangleMesh:
    return _merge([
        _box((0, 1 - bh, 0), (1, 1, 0.45)),
        _box((0.5 - sw / 2, 0, 0), (0.5 + sw / 2, 1, 0.45)),
    ])


def _make_cross(w: float, az: float) -> TriangleMesh:
    return _merge([
        _box((0, 0.5 - w / 2, 0), (1, 0.5 + w / 2, az)),
        _box((0.5 - w / 2, 0, 0), (0.5 + w / 2, 1, az)),
    ])


def _make_tube(hz: float, bore: float) -> TriangleMesh:
    return _tube(0.5, 0.5, bore, 0.0, hz)


def _make_ellipsoid(ay: float, az: float) -> TriangleMesh:
    return _ellipsoid(0.5, 0.5 * ay, 0.5 * az)


def _make_disc(t: float, ey: float) -> TriangleMesh:
    return _elliptic_cylinder(0.5, 0.5 * ey, 0.0, t)


_RECIPES = {
    "box": _make_box,
    "slab": _make_slab,
    "lbracket": _make_lbracket,
    "tbracket": _make_tbracket,
    "cross": _make_cross,
    "tube": _make_tube,
    "ellipsoid": _make_ellipsoid,
    "disc": _make_disc,
}

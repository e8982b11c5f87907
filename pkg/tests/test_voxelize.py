"""Voxelization: solid center-inside semantics and conservative shells."""

import numpy as np
import pytest

from shapebench.errors import DataError
from shapebench.mesh import TriangleMesh, is_watertight, signed_volume
from shapebench.voxelize import voxelize_mesh

# --- independent mesh builders (the oracle geometry) ---


def _box(lo, hi) -> TriangleMesh:
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    corners = np.array(
        [[lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]], [hi[0], hi[1], lo[2]],
         [lo[0], hi[1], lo[2]], [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]],
         [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]]]
    )
    quads = [  # CCW from outside
        (0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4),
        (3, 7, 6, 2), (0, 4, 7, 3), (1, 2, 6, 5),
    ]
    tris = []
    for q in quads:
        tris.append([q[0], q[1], q[2]])
        tris.append([q[0], q[2], q[3]])
    return TriangleMesh(corners, np.array(tris))


def _merge(meshes) -> TriangleMesh:
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def _uv_sphere(radius: float, rings: int, segs: int) -> TriangleMesh:
    verts = [(0.5, 0.5, 0.5 + radius)]
    for i in range(1, rings):
        th = np.pi * i / rings
        for j in range(segs):
            ph = 2.0 * np.pi * j / segs
            verts.append(
                (0.5 + radius * np.sin(th) * np.cos(ph),
                 0.5 + radius * np.sin(th) * np.sin(ph),
                 0.5 + radius * np.cos(th))
            )
    verts.append((0.5, 0.5, 0.5 - radius))

    def ring(i, j):
        return 1 + (i - 1) * segs + (j % segs)

    top, bot = 0, len(verts) - 1
    tris = []
    for j in range(segs):
        tris.append((top, ring(1, j), ring(1, j + 1)))
    for i in range(1, rings - 1):
        for j in range(segs):
            tris.append((ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)))
            tris.append((ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)))
    for j in range(segs):
        tris.append((bot, ring(rings - 1, j + 1), ring(rings - 1, j)))
    return TriangleMesh(np.array(verts), np.array(tris))


def _centers(r: int) -> np.ndarray:
    """(r, r, r, 3) array of cell-center coordinates, indexed [x, y, z]."""
    ax = (np.arange(r) + 0.5) / r
    return np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)


def _box_inside(centers, lo, hi) -> np.ndarray:
    above = (centers > np.asarray(lo)).all(axis=-1)
    below = (centers < np.asarray(hi)).all(axis=-1)
    return above & below


# --- solid voxelization: exact center-inside oracles ---


def test_solid_unit_cube_fills_grid():
    grid = voxelize_mesh(_box((0, 0, 0), (1, 1, 1)), 8)
    assert grid.count == 512


def test_solid_box_matches_center_oracle():
    lo, hi = (0.11, 0.13, 0.17), (0.61, 0.55, 0.66)
    grid = voxelize_mesh(_box(lo, hi), 16)
    expect = _box_inside(_centers(16), lo, hi)
    assert np.array_equal(grid.dense(), expect)


def test_solid_random_boxes_match_center_oracle(rng):
    centers = _centers(12)
    for _ in range(20):
        lo = rng.uniform(0.02, 0.45, 3)
        hi = lo + rng.uniform(0.1, 0.5, 3)
        grid = voxelize_mesh(_box(lo, hi), 12)
        assert np.array_equal(grid.dense(), _box_inside(centers, lo, hi))


def test_solid_overlapping_union_matches_oracle():
    b1 = ((0.12, 0.12, 0.22), (0.58, 0.61, 0.57))
    b2 = ((0.41, 0.33, 0.11), (0.88, 0.79, 0.52))
    mesh = _merge([_box(*b1), _box(*b2)])
    grid = voxelize_mesh(mesh, 16)
    centers = _centers(16)
    expect = _box_inside(centers, *b1) | _box_inside(centers, *b2)
    assert np.array_equal(grid.dense(), expect)


def test_solid_abutting_faces_cancel():
    # two boxes sharing the z=0.5 plane: the coincident opposite-facing
    # interface must not create or destroy crossings
    mesh = _merge(
        [_box((0.2, 0.2, 0.2), (0.8, 0.8, 0.5)), _box((0.2, 0.2, 0.5), (0.8, 0.8, 0.8))]
    )
    grid = voxelize_mesh(mesh, 8)
    expect = _box_inside(_centers(8), (0.2, 0.2, 0.2), (0.8, 0.8, 0.8))
    assert np.array_equal(grid.dense(), expect)


def test_solid_sphere_volume_and_bounds():
    radius = 0.4
    mesh = _uv_sphere(radius, rings=32, segs=64)
    assert is_watertight(mesh)
    assert signed_volume(mesh) > 0.0
    r = 64
    grid = voxelize_mesh(mesh, r)
    volume = grid.count / r**3
    assert abs(volume - 4.0 / 3.0 * np.pi * radius**3) < 0.05 * volume
    dist = np.linalg.norm(_centers(r) - 0.5, axis=-1)
    dense = grid.dense()
    # occupied centers lie inside the ball; comfortably interior centers
    # (inside the tessellation's inscribed sphere) are always occupied
    assert dist[dense].max() <= radius + 1e-9
    assert dense[dist <= 0.99 * radius].all()


# --- conservative surface voxelization ---


def _overlap_scalar(tri, center, half, eps) -> bool:
    """Plain 13-axis separating-axis test for one triangle and one cube."""
    p = tri - center
    edges = [p[1] - p[0], p[2] - p[1], p[0] - p[2]]
    axes = [np.eye(3)[a] for a in range(3)]
    axes.append(np.cross(edges[0], edges[1]))
    for e in edges:
        for a in range(3):
            axes.append(np.cross(np.eye(3)[a], e))
    for ax in axes:
        ln = np.linalg.norm(ax)
        if ln == 0.0:
            continue
        u = ax / ln
        proj = p @ u
        rad = half * np.abs(u).sum()
        if max(proj.min() - rad, -rad - proj.max()) >= -eps:
            return False
    return True


def test_shell_matches_scalar_sat(rng):
    r = 8
    h = 1.0 / r
    centers = _centers(r)
    for _ in range(5):
        tri = rng.uniform(0.05, 0.95, (3, 3))
        mesh = TriangleMesh(tri, np.array([[0, 1, 2]]))
        got = voxelize_mesh(mesh, r, solid=False).dense()
        expect = np.zeros((r, r, r), dtype=bool)
        for x in range(r):
            for y in range(r):
                for z in range(r):
                    expect[x, y, z] = _overlap_scalar(
                        tri, centers[x, y, z], h / 2.0, 1e-9 * h
                    )
        assert np.array_equal(got, expect)


def test_shell_triangle_inside_one_cell():
    tri = np.array([[0.28, 0.40, 0.55], [0.35, 0.42, 0.56], [0.30, 0.48, 0.60]])
    grid = voxelize_mesh(TriangleMesh(tri, np.array([[0, 1, 2]])), 8, solid=False)
    assert grid.count == 1
    assert grid.dense()[2, 3, 4]


def test_shell_grid_plane_square_lands_on_anti_normal_side():
    verts = np.array(
        [[0.2, 0.2, 0.5], [0.8, 0.2, 0.5], [0.8, 0.8, 0.5], [0.2, 0.8, 0.5]]
    )
    up = TriangleMesh(verts, np.array([[0, 1, 2], [0, 2, 3]]))  # normal +z
    dense = voxelize_mesh(up, 8, solid=False).dense()
    xs, ys, zs = np.nonzero(dense)
    assert set(zs.tolist()) == {3}
    assert dense.sum() == 36  # cells 1..6 on both in-plane axes

    down = TriangleMesh(verts, np.array([[2, 1, 0], [3, 2, 0]]))  # normal -z
    dense = voxelize_mesh(down, 8, solid=False).dense()
    assert set(np.nonzero(dense)[2].tolist()) == {4}


def test_shell_covers_box_faces():
    lo, hi = (0.2, 0.2, 0.2), (0.8, 0.8, 0.8)
    shell = voxelize_mesh(_box(lo, hi), 10, solid=False).dense()
    solid = voxelize_mesh(_box(lo, hi), 10, solid=True).dense()
    # every cell whose center is inside but that touches an outside center
    # neighbours the surface, so the conservative shell must include it
    interior = solid.copy()
    for axis in range(3):
        for shift in (1, -1):
            interior &= np.roll(solid, shift, axis=axis)
    boundary = solid & ~interior
    assert (shell[boundary]).all()


# --- input validation ---


def test_voxelize_rejects_bad_input():
    with pytest.raises(DataError):
        voxelize_mesh(TriangleMesh.empty(), 16)
    with pytest.raises(DataError):
        voxelize_mesh(_box((0.2, 0.2, 0.2), (0.8, 0.8, 0.8)), 4)

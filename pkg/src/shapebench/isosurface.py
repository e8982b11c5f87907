"""Isosurface extraction from binary voxel grids.

Marching cubes runs on the grid padded with one empty layer so surfaces at
the domain boundary are closed. Cell (i, j, k) is treated as a sample at its
center (i + 0.5) * h, so extracted vertices land on cell-face planes of the
original grid and re-voxelization stays aligned.
"""

from __future__ import annotations

import numpy as np
from skimage import measure

from .errors import DataError
from .mesh import TriangleMesh, signed_volume
from .voxel import VoxelGrid


def extract_isosurface(grid: VoxelGrid, level: float = 0.5) -> TriangleMesh:
    """Extract the level-set triangle mesh of a voxel grid in world units.

    The result is watertight for any non-empty, non-full occupancy and wound
    with outward-facing normals.
    """
    dense = grid.dense()
    if not dense.any():
        raise DataError("empty shape")
    if not (0.0 < level < 1.0):
        raise DataError(f"level must be in (0, 1), got {level}")
    padded = np.pad(dense.astype(np.float64), 1, mode="constant", constant_values=0.0)
    verts, faces, _, _ = measure.marching_cubes(padded, level=level)
    h = 1.0 / grid.resolution
    # padded index p maps to cell index p - 1, whose center is (p - 0.5) * h
    verts = (verts - 0.5) * h
    mesh = TriangleMesh(vertices=verts, triangles=faces.astype(np.int64))
    if signed_volume(mesh) < 0.0:
        mesh = TriangleMesh(vertices=mesh.vertices, triangles=mesh.triangles[:, ::-1])
    return mesh

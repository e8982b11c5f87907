"""Isosurface extraction from occupancy grids."""

import numpy as np
import pytest

from shapebench.errors import DataError
from shapebench.isosurface import extract_isosurface
from shapebench.mesh import euler_characteristic, is_watertight, signed_volume
from shapebench.voxel import VoxelGrid
from shapebench.voxelize import voxelize_mesh


def _grid_with_block(r, lo, hi) -> VoxelGrid:
    dense = np.zeros((r, r, r), dtype=bool)
    dense[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = True
    return VoxelGrid.from_dense(dense)


def test_single_voxel_surface_is_closed():
    grid = _grid_with_block(8, (3, 3, 3), (4, 4, 4))
    mesh = extract_isosurface(grid)
    assert is_watertight(mesh)
    assert euler_characteristic(mesh) == 2
    # the 0.5 level set of one occupied cell is the octahedron with apexes
    # halfway to the face-neighbour centers: volume (4/3) * (h/2)^3 = h^3/6
    h = 1.0 / 8
    assert signed_volume(mesh) == pytest.approx(h**3 / 6.0, rel=1e-9)


def test_vertices_near_occupied_cells():
    grid = _grid_with_block(16, (4, 5, 6), (9, 10, 11))
    mesh = extract_isosurface(grid)
    h = 1.0 / 16
    lo = np.array([4, 5, 6]) * h - h / 2
    hi = np.array([9, 10, 11]) * h + h / 2
    assert (mesh.vertices >= lo - 1e-12).all()
    assert (mesh.vertices <= hi + 1e-12).all()


def test_outward_winding_positive_volume():
    grid = _grid_with_block(12, (2, 3, 4), (9, 8, 7))
    mesh = extract_isosurface(grid)
    assert signed_volume(mesh) > 0.0
    assert is_watertight(mesh)


def test_boundary_voxels_still_closed():
    dense = np.zeros((8, 8, 8), dtype=bool)
    dense[0:3, 0:8, 5:8] = True  # touches three grid faces
    mesh = extract_isosurface(VoxelGrid.from_dense(dense))
    assert is_watertight(mesh)
    assert signed_volume(mesh) > 0.0


def test_block_revoxelizes_to_itself():
    # marching-cubes vertices sit on cell-face planes, never on centers, so
    # voxelizing the extracted surface reproduces the exact occupancy
    grid = _grid_with_block(16, (3, 4, 5), (12, 11, 9))
    mesh = extract_isosurface(grid)
    assert voxelize_mesh(mesh, 16) == grid


def test_empty_grid_rejected():
    with pytest.raises(DataError):
        extract_isosurface(VoxelGrid.empty(8))


def test_level_validated():
    grid = _grid_with_block(8, (2, 2, 2), (6, 6, 6))
    for level in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(DataError):
            extract_isosurface(grid, level=level)
    extract_isosurface(grid, level=0.25)

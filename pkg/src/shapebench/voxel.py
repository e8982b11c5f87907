"""Cubic binary occupancy grids, bit-packed, with the VXBG file format.

Cell (x, y, z) of a grid with resolution R covers the axis-aligned box
[x/R, (x+1)/R) x [y/R, (y+1)/R) x [z/R, (z+1)/R) of the unit cube. Bits are
stored x-fastest: flat index = x + R*y + R^2*z, bit i of byte b is cell
8*b + i.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DataError

VXBG_MAGIC = b"VXBG"
VXBG_VERSION = 1

MIN_RESOLUTION = 8
MAX_RESOLUTION = 512

# 6-connectivity: faces only, no edges/corners.
_SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Immutable bit-packed occupancy grid at resolution^3."""

    resolution: int
    packed: np.ndarray = field(repr=False)

    def __post_init__(self):
        # Dataset materialization enforces [MIN_RESOLUTION, MAX_RESOLUTION];
        # transient grids (e.g. aggressive downsamples) may be smaller.
        r = self.resolution
        if not 1 <= r <= MAX_RESOLUTION:
            raise DataError(f"resolution {r} outside [1, {MAX_RESOLUTION}]")
        nbytes = _packed_length(r)
        if self.packed.dtype != np.uint8 or self.packed.shape != (nbytes,):
            raise DataError(f"packed occupancy must be {nbytes} uint8 bytes")
        tail = r**3 % 8
        if tail and self.packed[-1] >> tail:
            raise DataError("padding bits beyond resolution^3 must be zero")
        self.packed.flags.writeable = False

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "VoxelGrid":
        """Build from a (R, R, R) boolean array indexed [x, y, z]."""
        dense = np.asarray(dense)
        if dense.ndim != 3 or len(set(dense.shape)) != 1:
            raise DataError(f"dense occupancy must be cubic, got shape {dense.shape}")
        r = dense.shape[0]
        packed = np.packbits(dense.astype(bool).ravel(order="F"), bitorder="little")
        return cls(r, packed)

    @classmethod
    def empty(cls, resolution: int) -> "VoxelGrid":
        return cls(resolution, np.zeros(_packed_length(resolution), dtype=np.uint8))

    def dense(self) -> np.ndarray:
        """Unpack to a (R, R, R) boolean array indexed [x, y, z]."""
        r = self.resolution
        flat = np.unpackbits(self.packed, count=r**3, bitorder="little")
        return flat.reshape((r, r, r), order="F").astype(bool)

    @property
    def count(self) -> int:
        """Number of occupied cells."""
        return int(_POPCOUNT[self.packed].sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.resolution == other.resolution and np.array_equal(self.packed, other.packed)

    def __hash__(self):
        return hash((self.resolution, self.packed.tobytes()))

    def to_bytes(self) -> bytes:
        """Serialize to the VXBG binary format."""
        header = VXBG_MAGIC + struct.pack("<BH", VXBG_VERSION, self.resolution)
        return header + self.packed.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "VoxelGrid":
        if len(blob) < 7 or blob[:4] != VXBG_MAGIC:
            raise DataError("not a VXBG blob (bad magic)")
        version, resolution = struct.unpack("<BH", blob[4:7])
        if version != VXBG_VERSION:
            raise DataError(f"unsupported VXBG version {version}")
        body = np.frombuffer(blob[7:], dtype=np.uint8)
        if body.shape[0] != _packed_length(resolution):
            raise DataError("VXBG payload length does not match resolution")
        return cls(resolution, body.copy())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "VoxelGrid":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


def _packed_length(resolution: int) -> int:
    return (resolution**3 + 7) // 8


def popcount_bytes(packed: np.ndarray) -> np.ndarray:
    """Per-byte popcount; sums of this give occupied-cell counts."""
    return _POPCOUNT[packed]


def fill_interior(grid: VoxelGrid) -> VoxelGrid:
    """Fill every cell not 6-connected to the outside of the grid.

    The exterior is found by flood fill over empty cells starting from a
    one-cell padding border; everything else becomes occupied. Open shells
    leak and simply gain no interior.
    """
    dense = grid.dense()
    if not dense.any():
        return grid
    empty = np.pad(~dense, 1, constant_values=True)
    labels, _ = ndimage.label(empty, structure=_SIX_CONNECTED)
    exterior_label = labels[0, 0, 0]
    filled = labels[1:-1, 1:-1, 1:-1] != exterior_label
    return VoxelGrid.from_dense(filled)


def downsample(grid: VoxelGrid, factor: int, frac: float = 0.5) -> VoxelGrid:
    """Reduce resolution by `factor`; an output cell is occupied iff the
    occupied fraction of its factor^3 block is >= frac."""
    r = grid.resolution
    if factor < 1 or r % factor != 0:
        raise DataError(f"factor {factor} does not divide resolution {r}")
    if not 0.0 < frac <= 1.0:
        raise DataError(f"frac must be in (0, 1], got {frac}")
    out = r // factor
    blocks = grid.dense().reshape(out, factor, out, factor, out, factor)
    counts = blocks.sum(axis=(1, 3, 5), dtype=np.int64)
    # small epsilon so exact fractions (e.g. 32/64 at frac=0.5) are kept
    keep = counts >= frac * factor**3 - 1e-9
    return VoxelGrid.from_dense(keep)

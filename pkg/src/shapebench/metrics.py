"""Shape similarity metrics: voxel IoU, Chamfer distance, and F-score with
precision/recall, plus threshold sweeps and distance colorization.

All point metrics operate in the normalized unit-cube frame so the threshold
d reads directly as a fraction of the volume side length. Threshold counting
uses strict `<`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError
from .mesh import PointCloud
from .voxel import VoxelGrid, popcount_bytes

DEFAULT_D = 0.01
DEFAULT_SAMPLE_COUNT = 10_000


@dataclass(frozen=True)
class MetricConfig:
    """Point-metric parameters: threshold d as a fraction of the side length,
    surface sample count, and an optional Chamfer distance clamp."""

    d: float = DEFAULT_D
    sample_count: int = DEFAULT_SAMPLE_COUNT
    cd_clamp: float | None = None

    def __post_init__(self):
        if self.d <= 0.0:
            raise DataError(f"d must be positive, got {self.d}")
        if self.sample_count < 1:
            raise DataError(f"sample_count must be >= 1, got {self.sample_count}")
        if self.cd_clamp is not None and self.cd_clamp <= 0.0:
            raise DataError(f"cd_clamp must be positive, got {self.cd_clamp}")


@dataclass(frozen=True)
class PRF:
    """Precision/recall/F-score percentages at one threshold. `empty_reconstruction`
    flags the P=0 convention used when the reconstruction has no points."""

    precision: float
    recall: float
    fscore: float
    empty_reconstruction: bool = False


def iou(a: VoxelGrid, b: VoxelGrid) -> float:
    """Intersection over union of two occupancy grids."""
    if a.resolution != b.resolution:
        raise DataError(f"resolution mismatch: {a.resolution} vs {b.resolution}")
    inter = int(popcount_bytes(a.packed & b.packed).sum())
    union = int(popcount_bytes(a.packed | b.packed).sum())
    if union == 0:
        raise DataError("IoU of two empty grids is undefined")
    return inter / union


def iou_matrix(grids: list[VoxelGrid]) -> np.ndarray:
    """Pairwise IoU, symmetric with unit diagonal."""
    n = len(grids)
    out = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = iou(grids[i], grids[j])
    return out


def point_distances(from_cloud: PointCloud, to_cloud: PointCloud) -> np.ndarray:
    """Distance from each point of `from_cloud` to its nearest neighbor in
    `to_cloud`; exact, via a KD-tree."""
    if len(from_cloud) == 0 or len(to_cloud) == 0:
        raise DataError("point_distances requires nonempty clouds")
    tree = cKDTree(to_cloud.points)
    dist, _ = tree.query(from_cloud.points, k=1)
    return np.asarray(dist, dtype=np.float64)


def chamfer(g: PointCloud, r: PointCloud, clamp: float | None = None) -> float:
    """Chamfer distance: mean nearest distance in each direction, summed."""
    e_r = point_distances(r, g)
    e_g = point_distances(g, r)
    if clamp is not None:
        e_r = np.minimum(e_r, clamp)
        e_g = np.minimum(e_g, clamp)
    return float(e_r.mean() + e_g.mean())


def precision_recall_f(g: PointCloud, r: PointCloud, d: float) -> PRF:
    """P(d) = % of reconstructed points with e_r < d, R(d) = % of ground-truth
    points with e_g < d, F = harmonic mean. Empty reconstruction: P = 0,
    R computed against nothing is also 0, flagged."""
    if d <= 0.0:
        raise DataError(f"d must be positive, got {d}")
    if len(g) == 0:
        raise DataError("ground-truth cloud is empty")
    if len(r) == 0:
        return PRF(0.0, 0.0, 0.0, empty_reconstruction=True)
    e_r = point_distances(r, g)
    e_g = point_distances(g, r)
    return _prf_from_errors(e_g, e_r, d)


def _prf_from_errors(e_g: np.ndarray, e_r: np.ndarray, d: float) -> PRF:
    precision = 100.0 * float((e_r < d).sum()) / len(e_r)
    recall = 100.0 * float((e_g < d).sum()) / len(e_g)
    return PRF(precision, recall, _harmonic(precision, recall))


def _harmonic(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0.0 else 0.0


def fscore_sweep(g: PointCloud, r: PointCloud, thresholds) -> list[tuple[float, PRF]]:
    """PRF at each threshold, reusing one distance computation."""
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise DataError("threshold list is empty")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise DataError("thresholds must be sorted strictly ascending")
    if len(g) == 0:
        raise DataError("ground-truth cloud is empty")
    if len(r) == 0:
        return [(t, PRF(0.0, 0.0, 0.0, empty_reconstruction=True)) for t in thresholds]
    e_r = point_distances(r, g)
    e_g = point_distances(g, r)
    return [(t, _prf_from_errors(e_g, e_r, t)) for t in thresholds]


def distance_colors(values: np.ndarray, d: float) -> np.ndarray:
    """Map per-point distances to a two-color gradient over [0, 2d]:
    0 -> blue endpoint, 2d -> red endpoint, linear in between, clamped."""
    if d <= 0.0:
        raise DataError(f"d must be positive, got {d}")
    t = np.clip(np.asarray(values, dtype=np.float64) / (2.0 * d), 0.0, 1.0)
    lo = np.array([43, 111, 182], dtype=np.float64)   # near
    hi = np.array([214, 47, 39], dtype=np.float64)    # at or beyond 2d
    rgb = lo[None, :] * (1.0 - t[:, None]) + hi[None, :] * t[:, None]
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)

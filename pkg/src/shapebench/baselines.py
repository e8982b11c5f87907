"""Recognition baselines: K-means clustering with thresholded mean shapes,
similarity-embedding retrieval, and the oracle nearest-neighbor bound.

Image-side predictors are out of scope; the Predictor protocol keeps the
slot open and oracle implementations (perfect recognition from geometry)
fill it for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import DataError, InvariantError, UsageError
from .metrics import iou
from .voxel import VoxelGrid, popcount_bytes

DEFAULT_TAU_GRID = tuple(np.round(np.arange(1, 11) * 0.05, 2).tolist())


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    objective_history: tuple[float, ...]
    iterations: int


@dataclass(frozen=True)
class ThresholdChoice:
    tau: float
    avg_iou: float
    all_empty: bool = False


@dataclass(frozen=True)
class ClusterModel:
    """K centroids over flattened low-res vectors plus per-cluster mean
    shapes, optimal thresholds, and member counts at high resolution."""

    k: int
    resolution: int
    low_resolution: int
    centroids: np.ndarray = field(repr=False)       # (k, low_res^3) float64
    mean_shapes: np.ndarray = field(repr=False)     # (k, R, R, R) float64
    thresholds: np.ndarray = field(repr=False)      # (k,) float64
    member_counts: np.ndarray = field(repr=False)   # (k,) int64
    tau_grid: tuple[float, ...] = DEFAULT_TAU_GRID
    empty_flags: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mean_shapes.shape != (self.k, self.resolution, self.resolution, self.resolution):
            raise DataError("mean_shapes shape does not match k and resolution")
        if self.mean_shapes.size and (self.mean_shapes.min() < 0.0 or self.mean_shapes.max() > 1.0):
            raise DataError("mean shape cells must lie in [0, 1]")
        if len(self.thresholds) != self.k or len(self.member_counts) != self.k:
            raise DataError("per-cluster arrays must have length k")


@dataclass(frozen=True)
class EmbeddingModel:
    """PCA basis over rows of the pairwise-IoU similarity matrix."""

    train_ids: tuple[str, ...]
    mean_row: np.ndarray = field(repr=False)     # (N,)
    basis: np.ndarray = field(repr=False)        # (dim, N), rows orthonormal
    descriptors: np.ndarray = field(repr=False)  # (N, dim)

    def __post_init__(self):
        n = len(self.train_ids)
        dim = self.basis.shape[0]
        if self.basis.shape != (dim, n) or self.mean_row.shape != (n,):
            raise DataError("basis/mean_row shapes inconsistent with train count")
        if self.descriptors.shape != (n, dim):
            raise DataError("descriptor count must equal train count")
        # loose bound here: float32 container round-trips must pass; freshly
        # fitted bases are checked at 1e-9 in fit_embedding
        gram = self.basis @ self.basis.T
        if not np.allclose(gram, np.eye(dim), atol=1e-6):
            raise InvariantError("embedding basis is not orthonormal")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


@runtime_checkable
class Predictor(Protocol):
    """Maps a test item to a cluster id or a descriptor; deterministic."""

    def predict(self, item): ...


def kmeans(vectors, k: int, seed: int, max_iters: int = 100) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding. Assignments are nearest
    centroid by squared Euclidean distance; empty clusters re-seed at the
    point farthest from its assigned centroid."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"vectors must be 2-D, got shape {x.shape}")
    n = len(x)
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds vector count {n}")
    if max_iters < 1:
        raise UsageError(f"max_iters must be >= 1, got {max_iters}")

    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeans_pp(x, k, rng)
    assignments = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        d2 = _sq_dists(x, centroids)
        new_assign = d2.argmin(axis=1)
        history.append(float(d2[np.arange(n), new_assign].sum()))
        changed = not np.array_equal(new_assign, assignments) or iterations == 1
        assignments = new_assign
        if not changed:
            break
        per_point = d2[np.arange(n), assignments]
        for c in range(k):
            members = assignments == c
            if members.any():
                centroids[c] = x[members].mean(axis=0)
            else:
                centroids[c] = x[per_point.argmax()]
                per_point = per_point.copy()
                per_point[per_point.argmax()] = 0.0
    d2 = _sq_dists(x, centroids)
    assignments = d2.argmin(axis=1)
    # final repair: park any still-empty cluster on the farthest points
    for _ in range(k):
        empty = [c for c in range(k) if not (assignments == c).any()]
        if not empty:
            break
        per_point = d2[np.arange(n), assignments]
        farthest = np.argsort(-per_point)
        for c, pi in zip(empty, farthest):
            centroids[c] = x[pi]
        d2 = _sq_dists(x, centroids)
        assignments = d2.argmin(axis=1)
    return KMeansResult(assignments, centroids, tuple(history), iterations)


def _kmeans_pp(x: np.ndarray, k: int, rng) -> np.ndarray:
    n = len(x)
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[c] = x[rng.integers(n)]
            continue
        probs = d2 / total
        centroids[c] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((x - centroids[c]) ** 2).sum(axis=1))
    return centroids


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; clip tiny negatives from cancellation
    d2 = (x * x).sum(axis=1)[:, None] + (c * c).sum(axis=1)[None, :] - 2.0 * (x @ c.T)
    return np.maximum(d2, 0.0)


def mean_shape(members: list[VoxelGrid]) -> np.ndarray:
    """Per-cell average occupancy of the member grids (real-valued)."""
    if not members:
        raise DataError("mean_shape of an empty member list")
    res = members[0].resolution
    if any(m.resolution != res for m in members):
        raise DataError("mean_shape members must share a resolution")
    acc = np.zeros((res, res, res), dtype=np.float64)
    for m in members:
        acc += m.dense()
    return acc / len(members)


def optimal_threshold(mean: np.ndarray, members: list[VoxelGrid],
                      grid=DEFAULT_TAU_GRID) -> ThresholdChoice:
    """Pick tau from the grid maximizing average IoU of (mean > tau) against
    the members; ties break toward the smallest tau."""
    if not members:
        raise DataError("optimal_threshold with no members")
    taus = [float(t) for t in grid]
    if not taus:
        raise DataError("threshold grid is empty")
    denses = [m.dense() for m in members]
    counts = np.array([d.sum() for d in denses], dtype=np.int64)
    if (counts == 0).any():
        raise DataError("optimal_threshold member with empty occupancy")
    best_tau, best_iou = None, -1.0
    any_occupied = False
    for t in taus:
        shape = mean > t
        s = int(shape.sum())
        any_occupied = any_occupied or s > 0
        inters = np.array([(shape & d).sum() for d in denses], dtype=np.int64)
        unions = s + counts - inters
        avg = float((inters / unions).mean())
        if avg > best_iou + 1e-15:
            best_tau, best_iou = t, avg
    return ThresholdChoice(best_tau, best_iou, all_empty=not any_occupied)


def build_cluster_model(train_high: list[VoxelGrid], train_low: list[VoxelGrid],
                        k: int, seed: int, tau_grid=DEFAULT_TAU_GRID,
                        max_iters: int = 100) -> ClusterModel:
    """K-means on flattened low-res occupancy, then per-cluster mean shapes
    and optimal thresholds on the high-res members."""
    if len(train_high) != len(train_low):
        raise DataError("train_high and train_low must be parallel lists")
    if not train_high:
        raise DataError("cannot fit a cluster model on an empty training set")
    res = train_high[0].resolution
    low_res = train_low[0].resolution
    vectors = np.stack([g.dense().ravel(order="F").astype(np.float64) for g in train_low])
    km = kmeans(vectors, k, seed, max_iters)

    means = np.zeros((k, res, res, res), dtype=np.float64)
    thresholds = np.zeros(k, dtype=np.float64)
    member_counts = np.zeros(k, dtype=np.int64)
    empty_flags = np.zeros(k, dtype=bool)
    for c in range(k):
        idx = np.nonzero(km.assignments == c)[0]
        if len(idx) == 0:
            raise InvariantError(f"cluster {c} empty after k-means repair")
        members = [train_high[i] for i in idx]
        m = mean_shape(members)
        choice = optimal_threshold(m, members, tau_grid)
        means[c] = m
        thresholds[c] = choice.tau
        member_counts[c] = len(idx)
        empty_flags[c] = choice.all_empty
    model = ClusterModel(
        k=k, resolution=res, low_resolution=low_res,
        centroids=km.centroids, mean_shapes=means, thresholds=thresholds,
        member_counts=member_counts, tau_grid=tuple(float(t) for t in tau_grid),
        empty_flags=empty_flags,
    )
    if int(model.member_counts.sum()) != len(train_high):
        raise InvariantError("cluster member counts do not sum to training size")
    return model


def predict_with_cluster(model: ClusterModel, cluster_id: int) -> VoxelGrid:
    """Binarized mean shape of the chosen cluster (m > tau, strict)."""
    if not 0 <= cluster_id < model.k:
        raise DataError(f"cluster id {cluster_id} out of range [0, {model.k})")
    shape = model.mean_shapes[cluster_id] > model.thresholds[cluster_id]
    return VoxelGrid.from_dense(shape)


def assign_cluster(model: ClusterModel, low: VoxelGrid) -> int:
    """Nearest centroid for a low-res grid (the oracle cluster predictor)."""
    if low.resolution != model.low_resolution:
        raise DataError(f"expected low resolution {model.low_resolution}, got {low.resolution}")
    v = low.dense().ravel(order="F").astype(np.float64)[None, :]
    return int(_sq_dists(v, model.centroids)[0].argmin())


def oracle_nn(test: VoxelGrid, train: list[VoxelGrid]) -> tuple[int, float]:
    """Index and IoU of the training grid with maximum IoU against the test
    grid; ties break toward the lowest index."""
    if not train:
        raise DataError("oracle_nn with an empty training set")
    if any(g.resolution != test.resolution for g in train):
        raise DataError("oracle_nn resolution mismatch")
    stack = np.stack([g.packed for g in train])
    inter = popcount_bytes(stack & test.packed[None, :]).sum(axis=1)
    union = popcount_bytes(stack | test.packed[None, :]).sum(axis=1)
    if (union == 0).any():
        raise DataError("oracle_nn: IoU undefined for a pair of empty grids")
    ious = inter / union
    idx = int(ious.argmax())
    return idx, float(ious[idx])


def build_similarity_matrix(train_low: list[VoxelGrid]) -> np.ndarray:
    """Pairwise IoU matrix of low-res training grids."""
    if len(train_low) < 2:
        raise DataError("similarity matrix needs at least 2 shapes")
    for i, g in enumerate(train_low):
        if g.count == 0:
            raise DataError(f"shape {i} has empty occupancy; IoU undefined")
    n = len(train_low)
    out = np.ones((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = iou(train_low[i], train_low[j])
    return out


def fit_embedding(similarity: np.ndarray, dim: int,
                  train_ids: tuple[str, ...] | None = None) -> EmbeddingModel:
    """PCA over the rows of the similarity matrix: center by the mean row,
    keep the top-dim principal directions, project rows to descriptors."""
    s = np.asarray(similarity, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DataError(f"similarity must be square, got {s.shape}")
    n = s.shape[0]
    if not 1 <= dim <= n:
        raise DataError(f"dim must be in [1, {n}], got {dim}")
    if train_ids is None:
        train_ids = tuple(str(i) for i in range(n))
    if len(train_ids) != n:
        raise DataError("train_ids length must match matrix size")
    mean_row = s.mean(axis=0)
    x = s - mean_row[None, :]
    cov = (x.T @ x) / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:dim]
    basis = eigvecs[:, order].T  # (dim, N)
    # deterministic sign: largest-magnitude component of each direction > 0
    for row in basis:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0.0:
            row *= -1.0
    descriptors = x @ basis.T
    gram = basis @ basis.T
    if not np.allclose(gram, np.eye(dim), atol=1e-9):
        raise InvariantError("fitted embedding basis is not orthonormal")
    return EmbeddingModel(tuple(train_ids), mean_row, basis, descriptors)


def embed_row(model: EmbeddingModel, row: np.ndarray) -> np.ndarray:
    """Project one similarity row into descriptor space (the oracle
    descriptor predictor: a perfect regressor)."""
    r = np.asarray(row, dtype=np.float64).ravel()
    if r.shape != model.mean_row.shape:
        raise DataError(f"row length {r.shape[0]} != train count {len(model.mean_row)}")
    return (r - model.mean_row) @ model.basis.T


def retrieve(model: EmbeddingModel, query: np.ndarray, mode: str = "cosine") -> int:
    """Index of the training descriptor closest to the query: maximum cosine
    similarity (default) or minimum Euclidean distance. Ties break toward
    the lowest index."""
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != model.dim:
        raise DataError(f"query dimension {q.shape[0]} != model dim {model.dim}")
    if mode == "cosine":
        qn = np.linalg.norm(q)
        dn = np.linalg.norm(model.descriptors, axis=1)
        if qn <= 0.0:
            raise DataError("zero-norm query; cosine similarity undefined")
        if (dn <= 0.0).any():
            raise DataError("zero-norm training descriptor; cosine similarity undefined")
        scores = (model.descriptors @ q) / (dn * qn)
        return int(scores.argmax())
    if mode == "euclidean":
        d2 = ((model.descriptors - q[None, :]) ** 2).sum(axis=1)
        return int(d2.argmin())
    raise UsageError(f"unknown retrieval mode {mode!r}")


class OracleClusterPredictor:
    """Assigns a test item (low-res grid) to its nearest centroid."""

    def __init__(self, model: ClusterModel):
        self.model = model

    def predict(self, item: VoxelGrid) -> int:
        return assign_cluster(self.model, item)


class OracleDescriptorPredictor:
    """Computes a test item's true similarity row against the training
    grids, then projects it (perfect descriptor regression)."""

    def __init__(self, model: EmbeddingModel, train_low: list[VoxelGrid]):
        if len(train_low) != len(model.train_ids):
            raise DataError("train_low count must match embedding train count")
        self.model = model
        self.train_low = list(train_low)

    def predict(self, item: VoxelGrid) -> np.ndarray:
        row = np.array([iou(item, g) for g in self.train_low], dtype=np.float64)
        return embed_row(self.model, row)

"""Versioned binary container for fitted baseline models.

Layout: magic "RBMD", version byte, kind byte (1 = cluster, 2 = embed),
then a kind-specific payload. Matrices are little-endian float32 row-major
with a (rows, cols) uint32 prefix; binary grids are embedded VXBG blocks
with a uint32 length prefix; strings are uint16-length-prefixed UTF-8.
"""

from __future__ import annotations

import struct

import numpy as np

from .baselines import ClusterModel, EmbeddingModel
from .errors import DataError, InvariantError
from .voxel import VoxelGrid

RBMD_MAGIC = b"RBMD"
RBMD_VERSION = 1
KIND_CLUSTER = 1
KIND_EMBED = 2


def save_model(model, path) -> None:
    if isinstance(model, ClusterModel):
        blob = RBMD_MAGIC + struct.pack("<BB", RBMD_VERSION, KIND_CLUSTER) + _cluster_payload(model)
    elif isinstance(model, EmbeddingModel):
        blob = RBMD_MAGIC + struct.pack("<BB", RBMD_VERSION, KIND_EMBED) + _embed_payload(model)
    else:
        raise DataError(f"cannot serialize model of type {type(model).__name__}")
    with open(path, "wb") as fh:
        fh.write(blob)


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6 or blob[:4] != RBMD_MAGIC:
        raise DataError("not an RBMD model file (bad magic)")
    version, kind = struct.unpack("<BB", blob[4:6])
    if version != RBMD_VERSION:
        raise DataError(f"unsupported RBMD version {version}")
    body = memoryview(blob)[6:]
    if kind == KIND_CLUSTER:
        return _read_cluster(body)
    if kind == KIND_EMBED:
        return _read_embed(body)
    raise DataError(f"unknown RBMD kind byte {kind}")


def _write_matrix(parts: list, arr: np.ndarray) -> None:
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    if a.ndim == 1:
        a = a[None, :]
    parts.append(struct.pack("<II", a.shape[0], a.shape[1]))
    parts.append(a.tobytes())


class _Reader:
    def __init__(self, buf: memoryview):
        self.buf = buf
        self.at = 0

    def take(self, n: int) -> memoryview:
        if self.at + n > len(self.buf):
            raise DataError("RBMD payload truncated")
        out = self.buf[self.at:self.at + n]
        self.at += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def matrix(self) -> np.ndarray:
        rows, cols = self.unpack("<II")
        data = np.frombuffer(self.take(4 * rows * cols), dtype="<f4")
        return data.reshape(rows, cols).astype(np.float64)


def _cluster_payload(model: ClusterModel) -> bytes:
    parts: list[bytes] = []
    parts.append(struct.pack("<IHH", model.k, model.resolution, model.low_resolution))
    parts.append(struct.pack("<B", len(model.tau_grid)))
    parts.append(np.asarray(model.tau_grid, dtype="<f4").tobytes())
    _write_matrix(parts, model.centroids)
    _write_matrix(parts, model.mean_shapes.reshape(model.k, -1))
    _write_matrix(parts, model.thresholds)
    parts.append(np.asarray(model.member_counts, dtype="<u4").tobytes())
    flags = model.empty_flags if model.empty_flags is not None else np.zeros(model.k, bool)
    parts.append(np.asarray(flags, dtype=np.uint8).tobytes())
    # binarized mean shapes, the grids actually served as predictions
    parts.append(struct.pack("<I", model.k))
    for c in range(model.k):
        shape = model.mean_shapes[c] > model.thresholds[c]
        blob = VoxelGrid.from_dense(shape).to_bytes()
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def _read_cluster(body: memoryview) -> ClusterModel:
    rd = _Reader(body)
    k, res, low_res = rd.unpack("<IHH")
    (n_tau,) = rd.unpack("<B")
    tau_grid = tuple(np.frombuffer(rd.take(4 * n_tau), dtype="<f4").astype(np.float64).tolist())
    centroids = rd.matrix()
    means = rd.matrix().reshape(k, res, res, res)
    thresholds = rd.matrix().ravel()
    member_counts = np.frombuffer(rd.take(4 * k), dtype="<u4").astype(np.int64)
    empty_flags = np.frombuffer(rd.take(k), dtype=np.uint8).astype(bool)
    (n_grids,) = rd.unpack("<I")
    if n_grids != k:
        raise DataError("RBMD cluster grid count does not match k")
    model = ClusterModel(
        k=k, resolution=res, low_resolution=low_res, centroids=centroids,
        mean_shapes=means, thresholds=thresholds, member_counts=member_counts,
        tau_grid=tau_grid, empty_flags=empty_flags,
    )
    for c in range(k):
        (blen,) = rd.unpack("<I")
        grid = VoxelGrid.from_bytes(bytes(rd.take(blen)))
        expect = means[c] > thresholds[c]
        if not np.array_equal(grid.dense(), expect):
            raise InvariantError(f"stored grid for cluster {c} disagrees with mean/threshold")
    return model


def _embed_payload(model: EmbeddingModel) -> bytes:
    parts: list[bytes] = []
    parts.append(struct.pack("<II", len(model.train_ids), model.dim))
    for sid in model.train_ids:
        raw = sid.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    _write_matrix(parts, model.mean_row)
    _write_matrix(parts, model.basis)
    _write_matrix(parts, model.descriptors)
    return b"".join(parts)


def _read_embed(body: memoryview) -> EmbeddingModel:
    rd = _Reader(body)
    n, dim = rd.unpack("<II")
    ids = []
    for _ in range(n):
        (ln,) = rd.unpack("<H")
        ids.append(bytes(rd.take(ln)).decode("utf-8"))
    mean_row = rd.matrix().ravel()
    basis = rd.matrix()
    descriptors = rd.matrix()
    if basis.shape != (dim, n) or descriptors.shape != (n, dim):
        raise DataError("RBMD embed matrix shapes inconsistent with header")
    return EmbeddingModel(tuple(ids), mean_row, basis, descriptors)

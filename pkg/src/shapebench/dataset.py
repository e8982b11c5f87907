"""Dataset manifest, per-class splits, and grid materialization.

Directory layout under a dataset root:
    manifest.json
    index.json
    grids/<resolution>/<frame>/<shape_id>[_<pose_idx>].vxbg
"""

from __future__ import annotations

import json
import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError
from .mesh import Pose, TriangleMesh, normalize_unit_cube, rotate_mesh
from .ply import load_mesh_ply
from .synthetic import CLASS_BANDS, DEFAULT_CLASSES, ShapeSpec, class_bounds, generate_synthetic
from .voxel import VoxelGrid
from .voxelize import voxelize_mesh

log = logging.getLogger("shapebench")

DEFAULT_RATIOS = (0.7, 0.1, 0.2)
# latent windows carving disjoint parameter sub-bands for the contamination
# experiment; the 0.45..0.55 gap keeps nearest cross-band shapes apart
TRAIN_WINDOW = (0.0, 0.45)
TEST_WINDOW = (0.55, 1.0)
FULL_WINDOW = (0.0, 1.0)

_POSE_STREAM = 7  # tag separating pose draws from other per-shape randomness


@dataclass(frozen=True)
class ManifestEntry:
    """One shape: either a mesh file on disk or an inline synthetic spec."""

    shape_id: str
    class_label: str
    mesh_path: str | None = None
    spec: ShapeSpec | None = None
    role: str | None = None  # train|val|test, recorded by contamination gen

    def __post_init__(self):
        if (self.mesh_path is None) == (self.spec is None):
            raise DataError(f"shape {self.shape_id!r} needs exactly one of mesh_path or spec")
        if self.role not in (None, "train", "val", "test"):
            raise DataError(f"bad role {self.role!r} for shape {self.shape_id!r}")


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    seed: int = 0
    contamination: float | None = None

    def __post_init__(self):
        ids = [e.shape_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("manifest shape ids must be unique")

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted({e.class_label for e in self.entries}))

    def entry(self, shape_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.shape_id == shape_id:
                return e
        raise DataError(f"unknown shape id {shape_id!r}")

    def has_roles(self) -> bool:
        return any(e.role is not None for e in self.entries)

    def to_json(self) -> str:
        shapes = []
        for e in self.entries:
            row = {"id": e.shape_id, "class": e.class_label}
            if e.mesh_path is not None:
                row["mesh_path"] = e.mesh_path
            if e.spec is not None:
                row["recipe"] = e.spec.recipe
                row["bounds"] = {k: list(v) for k, v in sorted(e.spec.bounds.items())}
                row["spec_seed"] = e.spec.seed
            if e.role is not None:
                row["role"] = e.role
            shapes.append(row)
        doc = {"seed": self.seed, "contamination": self.contamination, "shapes": shapes}
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        doc = json.loads(text)
        entries = []
        for row in doc.get("shapes", []):
            spec = None
            if "recipe" in row:
                bounds = {k: tuple(v) for k, v in row["bounds"].items()}
                spec = ShapeSpec(row["class"], row["recipe"], bounds, int(row["spec_seed"]))
            entries.append(ManifestEntry(
                shape_id=row["id"], class_label=row["class"],
                mesh_path=row.get("mesh_path"), spec=spec, role=row.get("role"),
            ))
        return cls(tuple(entries), int(doc.get("seed", 0)), doc.get("contamination"))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Manifest":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise DataError(f"cannot read manifest: {exc}") from exc


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        all_ids = self.train + self.val + self.test
        if len(set(all_ids)) != len(all_ids):
            raise DataError("split lists must be disjoint")

    def to_json(self) -> str:
        return json.dumps(
            {"train": sorted(self.train), "val": sorted(self.val), "test": sorted(self.test)},
            sort_keys=True, indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "Split":
        doc = json.loads(text)
        return cls(tuple(doc["train"]), tuple(doc["val"]), tuple(doc["test"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Split":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise DataError(f"cannot read split: {exc}") from exc


def _stable_seed(*parts) -> int:
    return zlib.crc32(":".join(str(p) for p in parts).encode("utf-8"))


def _largest_remainder(n: int, ratios) -> list[int]:
    quotas = [n * r for r in ratios]
    base = [int(q) for q in quotas]
    fracs = [q - b for q, b in zip(quotas, base)]
    short = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-fracs[i], i))
    for i in order[:short]:
        base[i] += 1
    return base


def _check_ratios(ratios) -> tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0.0 for r in ratios):
        raise UsageError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise UsageError(f"ratios must sum to 1, got {ratios}")
    return ratios


def gen_synthetic_manifest(per_class: int = 40, seed: int = 0,
                           classes=DEFAULT_CLASSES, contamination: float | None = None,
                           ratios=DEFAULT_RATIOS) -> Manifest:
    """Build a synthetic manifest: `per_class` instances of each class.

    With contamination=None every instance draws parameters from the full
    class bands and no roles are recorded. With a contamination level c the
    split is fixed now (recorded in `role`): train/val instances draw from
    the lower parameter window, and a fraction c of test instances are exact
    copies of train instances while the rest draw from the upper, disjoint
    window.
    """
    if per_class < 1:
        raise UsageError(f"per_class must be >= 1, got {per_class}")
    for label in classes:
        if label not in CLASS_BANDS:
            raise UsageError(f"unknown synthetic class {label!r}")
    if contamination is not None and not 0.0 <= contamination <= 1.0:
        raise UsageError(f"contamination must be in [0, 1], got {contamination}")
    ratios = _check_ratios(ratios)

    entries: list[ManifestEntry] = []
    for label in classes:
        ids = [f"{label}_{i:03d}" for i in range(per_class)]
        seeds = {sid: _stable_seed(seed, label, i) for i, sid in enumerate(ids)}
        if contamination is None:
            for sid in ids:
                spec = ShapeSpec(label, label, class_bounds(label, FULL_WINDOW), seeds[sid])
                entries.append(ManifestEntry(sid, label, spec=spec))
            continue
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([seed, _stable_seed(label), 1])))
        order = [ids[i] for i in rng.permutation(per_class)]
        n_train, n_val, n_test = _largest_remainder(per_class, ratios)
        groups = {
            "train": order[:n_train],
            "val": order[n_train:n_train + n_val],
            "test": order[n_train + n_val:],
        }
        train_ids = groups["train"]
        n_dup = int(round(contamination * len(groups["test"])))
        specs: dict[str, ShapeSpec] = {}
        for sid in train_ids + groups["val"]:
            specs[sid] = ShapeSpec(label, label, class_bounds(label, TRAIN_WINDOW), seeds[sid])
        for j, sid in enumerate(groups["test"]):
            if j < n_dup and train_ids:
                twin = specs[train_ids[j % len(train_ids)]]
                specs[sid] = twin  # same bounds and seed: identical mesh
            else:
                specs[sid] = ShapeSpec(label, label, class_bounds(label, TEST_WINDOW), seeds[sid])
        for role, members in groups.items():
            for sid in members:
                entries.append(ManifestEntry(sid, label, spec=specs[sid], role=role))
    entries.sort(key=lambda e: e.shape_id)
    return Manifest(tuple(entries), seed=seed, contamination=contamination)


def split_dataset(manifest: Manifest, ratios=DEFAULT_RATIOS, seed: int = 0) -> Split:
    """Per-class seeded shuffles with largest-remainder cuts. Manifests that
    recorded roles at generation time (contamination mode) keep them: the
    recorded split IS the dataset definition there."""
    ratios = _check_ratios(ratios)
    if manifest.has_roles():
        by_role = {"train": [], "val": [], "test": []}
        for e in manifest.entries:
            if e.role is None:
                raise DataError(f"shape {e.shape_id!r} lacks a role in a role-annotated manifest")
            by_role[e.role].append(e.shape_id)
        return Split(*(tuple(sorted(by_role[r])) for r in ("train", "val", "test")))

    train: list[str] = []
    val: list[str] = []
    test: list[str] = []
    by_class: dict[str, list[str]] = {}
    for e in manifest.entries:
        by_class.setdefault(e.class_label, []).append(e.shape_id)
    for label in sorted(by_class):
        ids = sorted(by_class[label])
        if len(ids) < 3:
            log.warning("class %r has %d < 3 shapes; assigning all to train", label, len(ids))
            train.extend(ids)
            continue
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([seed, _stable_seed(label)])))
        order = [ids[i] for i in rng.permutation(len(ids))]
        n_train, n_val, _ = _largest_remainder(len(ids), ratios)
        train.extend(order[:n_train])
        val.extend(order[n_train:n_train + n_val])
        test.extend(order[n_train + n_val:])
    return Split(tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)))


def load_entry_mesh(entry: ManifestEntry, base_dir: str | None = None) -> TriangleMesh:
    """Produce the normalized mesh for a manifest entry."""
    if entry.spec is not None:
        return generate_synthetic(entry.spec)
    path = entry.mesh_path
    if base_dir is not None and not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    try:
        mesh = load_mesh_ply(path)
    except OSError as exc:
        raise DataError(f"cannot read mesh for {entry.shape_id!r}: {exc}") from exc
    return normalize_unit_cube(mesh)


def shape_poses(manifest_seed: int, shape_id: str, count: int) -> list[Pose]:
    """Viewing poses for one shape: azimuth uniform on [0, 360), elevation
    uniform on [0, 50), drawn from a stream keyed by (seed, shape id) so
    adding shapes never reshuffles existing poses."""
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([manifest_seed, _stable_seed(shape_id), _POSE_STREAM])))
    draws = rng.random((count, 2))
    return [Pose(float(360.0 * a), float(50.0 * e)) for a, e in draws]


def materialize(manifest: Manifest, root, frame: str = "object", resolution: int = 64,
                poses_per_shape: int = 5, workers: int = 1) -> dict:
    """Voxelize every manifest shape and store the grids plus an index.

    Object frame: one solid grid per shape. Viewer frame: one grid per
    (shape, pose). Returns the index section that was written.
    """
    if frame not in ("object", "viewer"):
        raise UsageError(f"frame must be 'object' or 'viewer', got {frame!r}")
    if frame == "viewer" and poses_per_shape < 1:
        raise UsageError("viewer frame requires poses_per_shape >= 1")
    if workers < 1:
        raise UsageError(f"workers must be >= 1, got {workers}")

    root = str(root)
    rel_dir = os.path.join("grids", str(resolution), frame)
    os.makedirs(os.path.join(root, rel_dir), exist_ok=True)

    def one(entry: ManifestEntry):
        mesh = load_entry_mesh(entry, base_dir=root)
        rows = []
        if frame == "object":
            grid = voxelize_mesh(mesh, resolution, solid=True)
            rel = os.path.join(rel_dir, f"{entry.shape_id}.vxbg")
            grid.save(os.path.join(root, rel))
            rows.append((entry.shape_id, rel, None))
        else:
            for p, pose in enumerate(shape_poses(manifest.seed, entry.shape_id, poses_per_shape)):
                grid = voxelize_mesh(rotate_mesh(mesh, pose), resolution, solid=True)
                rel = os.path.join(rel_dir, f"{entry.shape_id}_{p}.vxbg")
                grid.save(os.path.join(root, rel))
                rows.append((f"{entry.shape_id}_{p}", rel, (pose.azimuth, pose.elevation)))
        return rows

    if workers == 1:
        produced = [one(e) for e in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            produced = list(pool.map(one, manifest.entries))

    section = {
        "frame": frame,
        "resolution": resolution,
        "poses_per_shape": poses_per_shape if frame == "viewer" else 0,
        "grids": {},
        "poses": {},
    }
    for rows in produced:
        for key, rel, pose in rows:
            section["grids"][key] = rel.replace(os.sep, "/")
            if pose is not None:
                section["poses"][key] = [pose[0], pose[1]]

    index_path = os.path.join(root, "index.json")
    index = {"datasets": {}, "seed": manifest.seed}
    if os.path.exists(index_path):
        with open(index_path, encoding="utf-8") as fh:
            index = json.load(fh)
        index.setdefault("datasets", {})
    index["seed"] = manifest.seed
    index["datasets"][f"{resolution}/{frame}"] = section
    with open(index_path, "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True, indent=1)
        fh.write("\n")
    manifest.save(os.path.join(root, "manifest.json"))
    return section


def load_index(root) -> dict:
    path = os.path.join(str(root), "index.json")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read dataset index: {exc}") from exc


def dataset_section(index: dict, resolution: int, frame: str) -> dict:
    key = f"{resolution}/{frame}"
    section = index.get("datasets", {}).get(key)
    if section is None:
        have = sorted(index.get("datasets", {}))
        raise DataError(f"no materialized grids for {key}; index has {have}")
    return section


def load_grid(root, rel_path: str) -> VoxelGrid:
    path = os.path.join(str(root), rel_path)
    try:
        return VoxelGrid.load(path)
    except OSError as exc:
        raise DataError(f"cannot read grid {rel_path!r}: {exc}") from exc


def grid_keys_for_shape(section: dict, shape_id: str) -> list[str]:
    """Keys in a materialized section belonging to one manifest shape."""
    if section["frame"] == "object":
        return [shape_id] if shape_id in section["grids"] else []
    count = section["poses_per_shape"]
    return [k for k in (f"{shape_id}_{p}" for p in range(count)) if k in section["grids"]]

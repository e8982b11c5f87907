"""End-to-end pipeline: dataset generation through evaluation and export.

Every step reads and writes through the dataset root and output directory,
so steps can run in separate processes (or behind the service) and still
compose. All randomness derives from the run seed; re-running a step with
identical inputs produces identical bytes (reports carry one timestamp
field that comparisons mask out).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines, metrics, stats
from .dataset import (
    DEFAULT_RATIOS,
    Manifest,
    Split,
    dataset_section,
    gen_synthetic_manifest,
    grid_keys_for_shape,
    load_grid,
    load_index,
    materialize,
    split_dataset,
)
from .errors import DataError, UsageError
from .isosurface import extract_isosurface
from .mesh import PointCloud, sample_surface
from .metrics import MetricConfig
from .model_io import load_model, save_model
from .ply import save_colored_cloud_ply
from .synthetic import DEFAULT_CLASSES
from .voxel import VoxelGrid, downsample

METHODS = ("cluster", "retrieval", "oracle_nn")
DEFAULT_SWEEP = (0.005, 0.01, 0.02, 0.05)


@dataclass(frozen=True)
class RunConfig:
    """Laptop-friendly defaults; larger studies (resolution 128, k 500,
    dim 512) are plain configuration."""

    root: str = "data"
    out_dir: str = "out"
    frame: str = "object"
    resolution: int = 64
    low_resolution: int = 32
    poses_per_shape: int = 5
    per_class: int = 40
    classes: tuple[str, ...] = DEFAULT_CLASSES
    contamination: float | None = None
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0
    workers: int = 1
    k: int = 16
    dim: int = 32
    tau_grid: tuple[float, ...] = baselines.DEFAULT_TAU_GRID
    similarity_mode: str = "cosine"
    d: float = 0.01
    sample_count: int = 10_000
    cd_clamp: float | None = None
    sweep: tuple[float, ...] = DEFAULT_SWEEP
    bins: int = 50
    alpha: float = 0.05

    def __post_init__(self):
        if self.frame not in ("object", "viewer"):
            raise UsageError(f"frame must be 'object' or 'viewer', got {self.frame!r}")
        if not 8 <= self.resolution <= 512:
            raise UsageError(f"resolution must be in [8, 512], got {self.resolution}")
        if self.low_resolution < 1 or self.resolution % self.low_resolution != 0:
            raise UsageError(
                f"low_resolution {self.low_resolution} must divide resolution {self.resolution}")
        if self.workers < 1:
            raise UsageError(f"workers must be >= 1, got {self.workers}")
        if self.k < 1 or self.dim < 1:
            raise UsageError("k and dim must be >= 1")
        if self.similarity_mode not in ("cosine", "euclidean"):
            raise UsageError(f"similarity_mode must be cosine or euclidean, got {self.similarity_mode!r}")
        if any(b <= a for a, b in zip(self.sweep, self.sweep[1:])):
            raise UsageError("sweep thresholds must be strictly ascending")
        try:
            MetricConfig(self.d, self.sample_count, self.cd_clamp)
        except DataError as exc:
            raise UsageError(str(exc)) from exc

    @property
    def metric_config(self) -> MetricConfig:
        return MetricConfig(self.d, self.sample_count, self.cd_clamp)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        coerced = dict(values)
        for key in ("classes", "tau_grid", "sweep"):
            if key in coerced and coerced[key] is not None:
                coerced[key] = tuple(coerced[key])
        if "ratios" in coerced and coerced["ratios"] is not None:
            coerced["ratios"] = tuple(coerced["ratios"])
        return cls(**coerced)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config file must contain a JSON object")
        return cls.from_dict(doc)

    def merged(self, overrides: dict) -> "RunConfig":
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(values)


def _seed32(*parts) -> int:
    return zlib.crc32(":".join(str(p) for p in parts).encode("utf-8"))


def manifest_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.root, "manifest.json")


def split_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.root, "split.json")


def model_path(cfg: RunConfig, kind: str) -> str:
    return os.path.join(cfg.out_dir, "models", f"{kind}.rbmd")


def prediction_path(cfg: RunConfig, method: str, key: str) -> str:
    return os.path.join(cfg.out_dir, "predictions", method, f"{key}.vxbg")


def report_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.out_dir, "reports", "report.json")


def run_gen(cfg: RunConfig) -> Manifest:
    manifest = gen_synthetic_manifest(cfg.per_class, cfg.seed, cfg.classes,
                                      cfg.contamination, cfg.ratios)
    os.makedirs(cfg.root, exist_ok=True)
    manifest.save(manifest_path(cfg))
    return manifest


def run_split(cfg: RunConfig) -> Split:
    manifest = Manifest.load(manifest_path(cfg))
    split = split_dataset(manifest, cfg.ratios, cfg.seed)
    split.save(split_path(cfg))
    return split


def run_materialize(cfg: RunConfig) -> dict:
    manifest = Manifest.load(manifest_path(cfg))
    return materialize(manifest, cfg.root, cfg.frame, cfg.resolution,
                       cfg.poses_per_shape, cfg.workers)


def _load_context(cfg: RunConfig):
    manifest = Manifest.load(manifest_path(cfg))
    split = Split.load(split_path(cfg))
    section = dataset_section(load_index(cfg.root), cfg.resolution, cfg.frame)
    return manifest, split, section


def _keys_for(manifest: Manifest, section: dict, shape_ids) -> list[tuple[str, str]]:
    """(grid key, class label) pairs for the given shapes, sorted by key."""
    out = []
    for sid in shape_ids:
        label = manifest.entry(sid).class_label
        keys = grid_keys_for_shape(section, sid)
        if not keys:
            raise DataError(f"no materialized grids for shape {sid!r}")
        out.extend((k, label) for k in keys)
    return sorted(out)


def _load_grids(cfg: RunConfig, section: dict, keys: list[str]) -> list[VoxelGrid]:
    return [load_grid(cfg.root, section["grids"][k]) for k in keys]


def _low_factor(cfg: RunConfig) -> int:
    return cfg.resolution // cfg.low_resolution


def run_fit_cluster(cfg: RunConfig) -> str:
    manifest, split, section = _load_context(cfg)
    pairs = _keys_for(manifest, section, split.train)
    keys = [k for k, _ in pairs]
    high = _load_grids(cfg, section, keys)
    low = [downsample(g, _low_factor(cfg)) for g in high]
    model = baselines.build_cluster_model(high, low, cfg.k, cfg.seed, cfg.tau_grid)
    path = model_path(cfg, "cluster")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    save_model(model, path)
    return path


def run_fit_retrieval(cfg: RunConfig) -> str:
    manifest, split, section = _load_context(cfg)
    pairs = _keys_for(manifest, section, split.train)
    keys = [k for k, _ in pairs]
    low = [downsample(g, _low_factor(cfg)) for g in _load_grids(cfg, section, keys)]
    similarity = baselines.build_similarity_matrix(low)
    model = baselines.fit_embedding(similarity, cfg.dim, tuple(keys))
    path = model_path(cfg, "retrieval")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    save_model(model, path)
    return path


def run_predict(cfg: RunConfig, methods=METHODS) -> dict[str, int]:
    """Write one predicted grid per (method, test key)."""
    methods = tuple(methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise UsageError(f"unknown methods: {sorted(unknown)}")
    manifest, split, section = _load_context(cfg)
    train_pairs = _keys_for(manifest, section, split.train)
    train_keys = [k for k, _ in train_pairs]
    test_pairs = _keys_for(manifest, section, split.test)
    train_high = _load_grids(cfg, section, train_keys)
    factor = _low_factor(cfg)

    cluster_model = load_model(model_path(cfg, "cluster")) if "cluster" in methods else None
    embed_model = None
    desc_predictor = None
    if "retrieval" in methods:
        embed_model = load_model(model_path(cfg, "retrieval"))
        if tuple(embed_model.train_ids) != tuple(train_keys):
            raise DataError("retrieval model was fitted on a different training set")
        train_low = [downsample(g, factor) for g in train_high]
        desc_predictor = baselines.OracleDescriptorPredictor(embed_model, train_low)

    counts = {m: 0 for m in methods}
    for key, _label in test_pairs:
        test_high = load_grid(cfg.root, section["grids"][key])
        test_low = downsample(test_high, factor)
        for method in methods:
            if method == "cluster":
                cid = baselines.assign_cluster(cluster_model, test_low)
                pred = baselines.predict_with_cluster(cluster_model, cid)
            elif method == "retrieval":
                desc = desc_predictor.predict(test_low)
                idx = baselines.retrieve(embed_model, desc, cfg.similarity_mode)
                pred = train_high[idx]
            else:
                idx, _ = baselines.oracle_nn(test_high, train_high)
                pred = train_high[idx]
            path = prediction_path(cfg, method, key)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            pred.save(path)
            counts[method] += 1
    return counts


def _dataset_hash(cfg: RunConfig) -> str:
    h = hashlib.sha256()
    for path in (manifest_path(cfg), os.path.join(cfg.root, "index.json")):
        try:
            with open(path, "rb") as fh:
                h.update(fh.read())
        except OSError:
            h.update(b"missing")
    return h.hexdigest()[:16]


def _surface_cloud(grid: VoxelGrid, count: int, seed: int) -> PointCloud:
    return sample_surface(extract_isosurface(grid), count, seed)


def evaluate_run(cfg: RunConfig, methods=METHODS) -> stats.EvalReport:
    """Score every (method, test key) pair: IoU on grids, Chamfer and PRF on
    10K-point surface samples, plus the configured F-score sweep. Missing or
    empty predictions become skip records."""
    methods = tuple(methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise UsageError(f"unknown methods: {sorted(unknown)}")
    manifest, split, section = _load_context(cfg)
    test_pairs = _keys_for(manifest, section, split.test)
    mc = cfg.metric_config
    sweep = tuple(sorted(set(cfg.sweep) | {cfg.d}))

    def one(pair):
        key, label = pair
        # one sampling seed per key, shared by ground truth and predictions:
        # a prediction equal to the ground truth then yields the identical
        # cloud, so its Chamfer distance is exactly 0 and its F-score 100
        sample_seed = _seed32(cfg.seed, key, "sample")
        gt = load_grid(cfg.root, section["grids"][key])
        gt_cloud = _surface_cloud(gt, mc.sample_count, sample_seed)
        entries: list[stats.EvalEntry] = []
        skips: list[stats.SkipEntry] = []
        for method in methods:
            path = prediction_path(cfg, method, key)
            if not os.path.exists(path):
                skips.append(stats.SkipEntry(key, label, method, "missing prediction"))
                continue
            pred = VoxelGrid.load(path)
            if pred.resolution != gt.resolution:
                skips.append(stats.SkipEntry(key, label, method, "resolution mismatch"))
                continue
            if pred.count == 0:
                skips.append(stats.SkipEntry(key, label, method, "empty prediction"))
                continue

            def put(metric, value):
                entries.append(stats.EvalEntry(key, label, method, metric, float(value)))

            put("iou", metrics.iou(gt, pred))
            pred_cloud = _surface_cloud(pred, mc.sample_count, sample_seed)
            put("chamfer", metrics.chamfer(gt_cloud, pred_cloud, mc.cd_clamp))
            for t, prf in metrics.fscore_sweep(gt_cloud, pred_cloud, sweep):
                suffix = "" if t == mc.d else f"@{t:g}"
                put(f"precision{suffix}", prf.precision)
                put(f"recall{suffix}", prf.recall)
                put(f"fscore{suffix}", prf.fscore)
        return entries, skips

    if cfg.workers == 1:
        results = [one(p) for p in test_pairs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(one, test_pairs))

    entries = tuple(e for es, _ in results for e in es)
    skips = tuple(s for _, ss in results for s in ss)
    metadata = {
        "config": json.loads(json.dumps(cfg.to_dict())),
        "dataset_hash": _dataset_hash(cfg),
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    report = stats.EvalReport(entries, skips, metadata)
    path = report_path(cfg)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    report.save(path)
    return report


def sweep_table(report: stats.EvalReport) -> list[dict]:
    """Mean precision/recall/F-score per method at every swept threshold."""
    sweep_metrics = sorted({m for m in report.metrics() if m.startswith("fscore")})
    default_d = report.metadata.get("config", {}).get("d")
    rows = []
    for method in report.methods():
        for m in sweep_metrics:
            d = float(m.split("@", 1)[1]) if "@" in m else default_d
            if d is None:
                continue
            vals = report.values(method, m)
            if len(vals):
                prec = report.values(method, m.replace("fscore", "precision"))
                rec = report.values(method, m.replace("fscore", "recall"))
                rows.append({
                    "method": method, "d": float(d),
                    "mean_precision": float(prec.mean()) if len(prec) else 0.0,
                    "mean_recall": float(rec.mean()) if len(rec) else 0.0,
                    "mean_fscore": float(vals.mean()),
                })
    rows.sort(key=lambda r: (r["method"], r["d"]))
    return rows


def cutoff_table(report: stats.EvalReport,
                 metric_names=("fscore", "precision", "recall"),
                 cutoffs=None) -> list[dict]:
    """Percentage of test shapes at or above each cutoff, per method."""
    if cutoffs is None:
        cutoffs = np.linspace(0.0, 100.0, 21)
    rows = []
    for cut_metric in metric_names:
        if cut_metric not in report.metrics():
            continue
        for method in report.methods():
            vals = report.values(method, cut_metric)
            for c, pct in stats.cutoff_curve(vals, cutoffs):
                rows.append({"metric": cut_metric, "method": method,
                             "cutoff": c, "percent_at_or_above": pct})
    return rows


def emit_reports(report: stats.EvalReport, out_dir, metric: str = "iou",
                 bins: int = 50, alpha: float = 0.05, binned_ks: bool = False) -> list[str]:
    """Write the plot-ready CSV family for a report; returns written paths."""
    if not report.entries:
        raise DataError("cannot emit reports from an empty report")
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    def out(name):
        path = os.path.join(out_dir, name)
        written.append(path)
        return path

    fields = ["class", "n", "mean", "median", "q1", "q3", "min", "max", "std"]
    overall_rows = []
    for method in report.methods():
        rows = stats.per_class_aggregate(report, metric, method)
        stats.write_table_csv(out(f"per_class_{metric}_{method}.csv"), fields, rows)
        for row in rows:
            if row["class"] == "overall":
                overall_rows.append({"method": method, **{k: row[k] for k in fields[1:]}})
    stats.write_table_csv(out(f"overall_{metric}.csv"), ["method", *fields[1:]], overall_rows)

    value_range = (0.0, 1.0) if metric == "iou" else (0.0, 100.0)
    for method in report.methods():
        rows = []
        lo, hi = value_range
        width = (hi - lo) / bins
        for label in report.classes():
            counts = stats.histogram(report.values(method, metric, label), bins, value_range)
            for b, c in enumerate(counts):
                rows.append({"class": label, "bin_lo": lo + b * width,
                             "bin_hi": lo + (b + 1) * width, "count": int(c)})
        stats.write_table_csv(out(f"hist_{metric}_{method}.csv"),
                              ["class", "bin_lo", "bin_hi", "count"], rows)

    heatmap = stats.ks_heatmap(report, None, metric, alpha, binned=binned_ks)
    stats.write_heatmap_csv(out(f"ks_heatmap_{metric}.csv"), heatmap)

    stats.write_table_csv(out("fscore_sweep.csv"),
                          ["method", "d", "mean_precision", "mean_recall", "mean_fscore"],
                          sweep_table(report))
    stats.write_table_csv(out("cutoff_curves.csv"),
                          ["metric", "method", "cutoff", "percent_at_or_above"],
                          cutoff_table(report))

    report.save(out("report.json"))
    return written


def run_stats_ks(cfg: RunConfig, metric: str = "iou", binned: bool = False) -> stats.KSHeatmap:
    report = stats.EvalReport.load(report_path(cfg))
    heatmap = stats.ks_heatmap(report, None, metric, cfg.alpha, binned=binned)
    out = os.path.join(cfg.out_dir, "reports", f"ks_heatmap_{metric}.csv")
    stats.write_heatmap_csv(out, heatmap)
    return heatmap


def run_stats_sweep(cfg: RunConfig) -> list[dict]:
    report = stats.EvalReport.load(report_path(cfg))
    rows = sweep_table(report)
    out = os.path.join(cfg.out_dir, "reports", "fscore_sweep.csv")
    stats.write_table_csv(out, ["method", "d", "mean_precision", "mean_recall",
                                "mean_fscore"], rows)
    return rows


def run_stats_cutoff(cfg: RunConfig, metric_names=("fscore", "precision", "recall")) -> list[dict]:
    report = stats.EvalReport.load(report_path(cfg))
    rows = cutoff_table(report, metric_names)
    out = os.path.join(cfg.out_dir, "reports", "cutoff_curves.csv")
    stats.write_table_csv(out, ["metric", "method", "cutoff", "percent_at_or_above"], rows)
    return rows


def run_stats_corr(cfg: RunConfig, metric: str = "iou") -> dict:
    """Class size vs. per-class mean metric correlation, per method."""
    report = stats.EvalReport.load(report_path(cfg))
    out = {}
    for method in report.methods():
        sizes = []
        means = []
        for label in report.classes():
            vals = report.values(method, metric, label)
            if len(vals) == 0:
                continue
            sizes.append(len(vals))
            means.append(float(vals.mean()))
        out[method] = stats.pearson(sizes, means) if len(set(sizes)) > 1 else float("nan")
    rows = [{"method": m, "pearson_r": v} for m, v in sorted(out.items())]
    path = os.path.join(cfg.out_dir, "reports", f"corr_{metric}.csv")
    stats.write_table_csv(path, ["method", "pearson_r"], rows)
    return out


def run_viz_pr(cfg: RunConfig, method: str, key: str, prefix: str | None = None) -> list[str]:
    """Colorized precision/recall clouds for one prediction (two PLY files):
    the reconstruction colored by distance-to-ground-truth and the ground
    truth colored by distance-to-reconstruction, gradient over [0, 2d]."""
    manifest, _split, section = _load_context(cfg)
    if key not in section["grids"]:
        raise DataError(f"unknown grid key {key!r}")
    pred_file = prediction_path(cfg, method, key)
    if not os.path.exists(pred_file):
        raise DataError(f"no prediction for method {method!r}, key {key!r}")
    gt = load_grid(cfg.root, section["grids"][key])
    pred = VoxelGrid.load(pred_file)
    mc = cfg.metric_config
    sample_seed = _seed32(cfg.seed, key, "sample")
    gt_cloud = _surface_cloud(gt, mc.sample_count, sample_seed)
    pred_cloud = _surface_cloud(pred, mc.sample_count, sample_seed)
    e_r = metrics.point_distances(pred_cloud, gt_cloud)
    e_g = metrics.point_distances(gt_cloud, pred_cloud)
    if prefix is None:
        prefix = os.path.join(cfg.out_dir, "viz", f"{method}_{key}")
    os.makedirs(os.path.dirname(prefix), exist_ok=True)
    paths = []
    for name, cloud, errs in (("precision", pred_cloud, e_r), ("recall", gt_cloud, e_g)):
        path = f"{prefix}_{name}.ply"
        save_colored_cloud_ply(cloud.with_values(errs), metrics.distance_colors(errs, mc.d), path)
        paths.append(path)
    return paths

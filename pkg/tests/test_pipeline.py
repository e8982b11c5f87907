"""End-to-end pipeline on a tiny synthetic dataset."""

import json
import math
import os
import shutil
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from shapebench.dataset import Split
from shapebench.errors import DataError, UsageError
from shapebench.pipeline import (
    METHODS,
    RunConfig,
    cutoff_table,
    emit_reports,
    evaluate_run,
    model_path,
    prediction_path,
    report_path,
    run_fit_cluster,
    run_fit_retrieval,
    run_gen,
    run_materialize,
    run_predict,
    run_split,
    run_stats_corr,
    run_stats_ks,
    run_stats_sweep,
    run_viz_pr,
    sweep_table,
    split_path,
)
from shapebench.ply import load_cloud_ply
from shapebench.stats import EvalReport
from shapebench.voxel import VoxelGrid


# --- configuration ---


def test_config_validation():
    RunConfig()
    cases = [
        {"frame": "camera"},
        {"resolution": 4},
        {"resolution": 1024},
        {"low_resolution": 48},  # does not divide 64
        {"workers": 0},
        {"k": 0},
        {"dim": 0},
        {"similarity_mode": "dot"},
        {"sweep": (0.02, 0.01)},
        {"d": 0.0},
        {"sample_count": 0},
    ]
    for overrides in cases:
        with pytest.raises(UsageError):
            RunConfig(**overrides)


def test_config_dict_round_trip():
    cfg = RunConfig(resolution=32, low_resolution=16, classes=("box", "tube"))
    clone = RunConfig.from_dict(cfg.to_dict())
    assert clone == cfg
    with pytest.raises(UsageError):
        RunConfig.from_dict({"resolutoin": 32})


def test_config_merged_ignores_none():
    cfg = RunConfig(k=5)
    out = cfg.merged({"k": None, "dim": 7})
    assert out.k == 5
    assert out.dim == 7


def test_config_load_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"resolution": 16, "low_resolution": 8}))
    cfg = RunConfig.load(path)
    assert (cfg.resolution, cfg.low_resolution) == (16, 8)
    assert cfg.k == 16  # untouched default

    with pytest.raises(UsageError):
        RunConfig.load(tmp_path / "missing.json")
    path.write_text("{not json")
    with pytest.raises(UsageError):
        RunConfig.load(path)
    path.write_text("[1, 2]")
    with pytest.raises(UsageError):
        RunConfig.load(path)


# --- tiny end-to-end run (shared by the tests below) ---

N_TEST_KEYS = 4  # 2 classes x 10 shapes at (0.7, 0.1, 0.2) -> 2 test each
N_SWEEP = 2      # thresholds {0.02, 0.05}
METRICS_PER_PAIR = 2 + 3 * N_SWEEP  # iou, chamfer, PRF per threshold


@pytest.fixture(scope="module")
def pipe(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipe")
    cfg = RunConfig(
        root=str(base / "data"), out_dir=str(base / "out"),
        resolution=16, low_resolution=8, per_class=10,
        classes=("box", "ellipsoid"), k=3, dim=4,
        d=0.05, sweep=(0.02, 0.05), sample_count=400, seed=0,
    )
    run_gen(cfg)
    run_split(cfg)
    run_materialize(cfg)
    run_fit_cluster(cfg)
    run_fit_retrieval(cfg)
    counts = run_predict(cfg)
    report = evaluate_run(cfg)
    return SimpleNamespace(cfg=cfg, counts=counts, report=report, base=base)


def _copy_out(pipe, tmp_path) -> RunConfig:
    """Clone the pipeline output tree so mutating tests stay isolated."""
    out = tmp_path / "out"
    shutil.copytree(pipe.cfg.out_dir, out)
    return replace(pipe.cfg, out_dir=str(out))


def test_artifacts_on_disk(pipe):
    cfg = pipe.cfg
    assert os.path.exists(os.path.join(cfg.root, "manifest.json"))
    assert os.path.exists(split_path(cfg))
    assert os.path.exists(model_path(cfg, "cluster"))
    assert os.path.exists(model_path(cfg, "retrieval"))
    assert os.path.exists(report_path(cfg))
    for method in METHODS:
        assert pipe.counts[method] == N_TEST_KEYS
        for key in _test_keys(pipe):
            assert os.path.exists(prediction_path(cfg, method, key))


def _test_keys(pipe):
    return Split.load(split_path(pipe.cfg)).test


def test_report_entry_counts(pipe):
    report = pipe.report
    assert len(report.entries) == N_TEST_KEYS * len(METHODS) * METRICS_PER_PAIR
    assert report.skips == ()
    assert report.methods() == tuple(sorted(METHODS))
    assert set(report.metrics()) == {
        "iou", "chamfer", "precision", "recall", "fscore",
        "precision@0.02", "recall@0.02", "fscore@0.02",
    }


def test_report_value_ranges(pipe):
    report = pipe.report
    for method in METHODS:
        iou_vals = report.values(method, "iou")
        assert len(iou_vals) == N_TEST_KEYS
        assert (iou_vals >= 0.0).all() and (iou_vals <= 1.0).all()
        for name in ("fscore", "precision", "recall"):
            vals = report.values(method, name)
            assert (vals >= 0.0).all() and (vals <= 100.0).all()
        assert (report.values(method, "chamfer") >= 0.0).all()


def test_oracle_nn_dominates_retrieval(pipe):
    # both methods return training grids; the oracle maximizes IoU over the
    # training set, so per shape it can never lose to retrieval
    report = pipe.report
    for key in _test_keys(pipe):
        o = [e.value for e in report.entries
             if e.method == "oracle_nn" and e.metric == "iou" and e.shape_id == key]
        r = [e.value for e in report.entries
             if e.method == "retrieval" and e.metric == "iou" and e.shape_id == key]
        assert o[0] >= r[0] - 1e-12


def test_report_round_trips_from_disk(pipe):
    loaded = EvalReport.load(report_path(pipe.cfg))
    assert set(loaded.entries) == set(pipe.report.entries)
    assert loaded.metadata["config"]["resolution"] == 16
    assert "dataset_hash" in loaded.metadata


def test_rerun_is_deterministic_modulo_timestamp(pipe):
    again = evaluate_run(pipe.cfg)
    assert set(again.entries) == set(pipe.report.entries)
    assert again.skips == pipe.report.skips
    meta_a = {k: v for k, v in again.metadata.items() if k != "created_at"}
    meta_b = {k: v for k, v in pipe.report.metadata.items() if k != "created_at"}
    assert meta_a == meta_b


def test_parallel_evaluation_matches(pipe):
    par = evaluate_run(replace(pipe.cfg, workers=3))
    assert set(par.entries) == set(pipe.report.entries)


def test_missing_prediction_becomes_skip(pipe, tmp_path):
    cfg = _copy_out(pipe, tmp_path)
    victim = _test_keys(pipe)[0]
    os.remove(prediction_path(cfg, "cluster", victim))
    report = evaluate_run(cfg)
    assert len(report.skips) == 1
    skip = report.skips[0]
    assert (skip.shape_id, skip.method, skip.reason) == (victim, "cluster", "missing prediction")
    assert len(report.entries) == len(pipe.report.entries) - METRICS_PER_PAIR


def test_resolution_mismatch_becomes_skip(pipe, tmp_path):
    cfg = _copy_out(pipe, tmp_path)
    victim = _test_keys(pipe)[1]
    VoxelGrid.empty(8).save(prediction_path(cfg, "retrieval", victim))
    report = evaluate_run(cfg)
    assert any(s.reason == "resolution mismatch" and s.shape_id == victim
               for s in report.skips)


def test_perfect_predictions_score_exactly(pipe, tmp_path):
    # copying the ground truth over one method's predictions must give IoU
    # exactly 1, Chamfer exactly 0, and F-score exactly 100: ground truth and
    # prediction share the per-key sampling seed
    cfg = _copy_out(pipe, tmp_path)
    from shapebench.dataset import dataset_section, load_index

    section = dataset_section(load_index(cfg.root), cfg.resolution, cfg.frame)
    for key in _test_keys(pipe):
        src = os.path.join(cfg.root, section["grids"][key])
        shutil.copyfile(src, prediction_path(cfg, "cluster", key))
    report = evaluate_run(cfg, methods=("cluster",))
    assert (report.values("cluster", "iou") == 1.0).all()
    assert (report.values("cluster", "chamfer") == 0.0).all()
    for name in ("fscore", "precision", "recall", "fscore@0.02"):
        assert (report.values("cluster", name) == 100.0).all()


def test_predict_rejects_unknown_method(pipe):
    with pytest.raises(UsageError):
        run_predict(pipe.cfg, methods=("cluster", "nope"))
    with pytest.raises(UsageError):
        evaluate_run(pipe.cfg, methods=("nope",))


def test_predict_detects_stale_retrieval_model(pipe, tmp_path):
    # swap one train and test id: the stored model no longer matches
    cfg = replace(pipe.cfg)
    split = Split.load(split_path(cfg))
    swapped = Split(
        (split.test[0],) + split.train[1:], split.val, (split.train[0],) + split.test[1:]
    )
    path = split_path(cfg)
    original = open(path).read()
    try:
        swapped.save(path)
        with pytest.raises(DataError, match="different training set"):
            run_predict(cfg, methods=("retrieval",))
    finally:
        open(path, "w").write(original)


# --- derived tables and exports ---


def test_sweep_table_means(pipe):
    rows = sweep_table(pipe.report)
    assert len(rows) == len(METHODS) * N_SWEEP
    for row in rows:
        metric = "fscore" if row["d"] == 0.05 else f"fscore@{row['d']:g}"
        expect = pipe.report.values(row["method"], metric).mean()
        assert row["mean_fscore"] == pytest.approx(expect, abs=1e-12)
    ds = [row["d"] for row in rows if row["method"] == "cluster"]
    assert ds == sorted(ds)


def test_cutoff_table_extremes(pipe):
    rows = cutoff_table(pipe.report)
    assert len(rows) == 3 * len(METHODS) * 21
    for row in rows:
        if row["cutoff"] == 0.0:
            assert row["percent_at_or_above"] == 100.0
        assert 0.0 <= row["percent_at_or_above"] <= 100.0


def test_emit_reports_files(pipe, tmp_path):
    out = tmp_path / "reports"
    written = emit_reports(pipe.report, out, metric="iou")
    names = {os.path.basename(p) for p in written}
    expect = {
        "overall_iou.csv", "ks_heatmap_iou.csv", "fscore_sweep.csv",
        "cutoff_curves.csv", "report.json",
    }
    expect |= {f"per_class_iou_{m}.csv" for m in METHODS}
    expect |= {f"hist_iou_{m}.csv" for m in METHODS}
    assert names == expect
    for p in written:
        assert os.path.exists(p)
    # histogram counts add up to the number of test shapes per class
    hist = open(os.path.join(out, "hist_iou_cluster.csv")).read().splitlines()[1:]
    per_class = {}
    for line in hist:
        label, _, _, count = line.split(",")
        per_class[label] = per_class.get(label, 0) + int(count)
    assert per_class == {"box": 2, "ellipsoid": 2}


def test_emit_reports_rejects_empty():
    with pytest.raises(DataError):
        emit_reports(EvalReport(()), "unused")


def test_stats_entrypoints(pipe):
    heatmap = run_stats_ks(pipe.cfg)
    assert heatmap.methods == tuple(sorted(METHODS))
    assert heatmap.classes == ("box", "ellipsoid")
    # a method against itself never rejects, so the diagonal counts every class
    assert (np.diag(heatmap.counts) == len(heatmap.classes)).all()

    rows = run_stats_sweep(pipe.cfg)
    assert rows == sweep_table(pipe.report)

    corr = run_stats_corr(pipe.cfg)
    assert set(corr) == set(METHODS)
    for v in corr.values():
        assert math.isnan(v)  # both classes have the same test count
    assert os.path.exists(os.path.join(pipe.cfg.out_dir, "reports", "corr_iou.csv"))


def test_viz_pr_writes_colored_clouds(pipe):
    key = _test_keys(pipe)[0]
    paths = run_viz_pr(pipe.cfg, "cluster", key)
    assert [os.path.basename(p) for p in paths] == [
        f"cluster_{key}_precision.ply", f"cluster_{key}_recall.ply",
    ]
    for p in paths:
        cloud = load_cloud_ply(p)
        assert len(cloud) == pipe.cfg.sample_count
        assert cloud.values is not None and (cloud.values >= 0.0).all()
    with pytest.raises(DataError, match="unknown grid key"):
        run_viz_pr(pipe.cfg, "cluster", "not_a_key")
    custom = run_viz_pr(pipe.cfg, "retrieval", key, prefix=str(pipe.base / "vz" / "x"))
    assert [os.path.basename(p) for p in custom] == ["x_precision.ply", "x_recall.ply"]


def test_viz_pr_missing_prediction(pipe, tmp_path):
    cfg = _copy_out(pipe, tmp_path)
    key = _test_keys(pipe)[0]
    os.remove(prediction_path(cfg, "oracle_nn", key))
    with pytest.raises(DataError, match="no prediction"):
        run_viz_pr(cfg, "oracle_nn", key)

"""Statistics: reports, aggregation, KS tests, correlation, exports."""

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from shapebench.errors import DataError
from shapebench.stats import (
    EvalEntry,
    EvalReport,
    SkipEntry,
    cutoff_curve,
    cutoff_fraction,
    histogram,
    ks_heatmap,
    ks_two_sample,
    pearson,
    per_class_aggregate,
    write_heatmap_csv,
    write_json,
    write_table_csv,
)


def _report(rows, skips=(), metadata=None) -> EvalReport:
    entries = tuple(EvalEntry(*r) for r in rows)
    return EvalReport(entries, tuple(SkipEntry(*s) for s in skips), metadata or {})


# --- report container ---


def test_report_round_trip(tmp_path):
    report = _report(
        [("s1", "box", "cluster", "iou", 0.5), ("s2", "box", "cluster", "iou", 0.75),
         ("s1", "box", "cluster", "fscore", 40.0)],
        skips=[("s9", "tube", "cluster", "missing prediction")],
        metadata={"config": {"d": 0.01}},
    )
    path = tmp_path / "report.json"
    report.save(path)
    back = EvalReport.load(path)
    assert set(back.entries) == set(report.entries)
    assert back.skips == report.skips
    assert back.metadata == report.metadata


def test_report_json_is_deterministic():
    rows = [("s2", "box", "m", "iou", 0.2), ("s1", "box", "m", "iou", 0.1)]
    a = _report(rows).to_json()
    b = _report(list(reversed(rows))).to_json()
    assert a == b


def test_report_rejects_duplicates_and_nonfinite():
    with pytest.raises(DataError):
        _report([("s1", "box", "m", "iou", 0.5), ("s1", "box", "m", "iou", 0.6)])
    with pytest.raises(DataError):
        _report([("s1", "box", "m", "iou", float("nan"))])


def test_report_accessors():
    report = _report(
        [("s1", "box", "b_method", "iou", 0.5), ("s2", "tube", "a_method", "iou", 0.9),
         ("s2", "tube", "a_method", "chamfer", 0.1)]
    )
    assert report.methods() == ("a_method", "b_method")
    assert report.classes() == ("box", "tube")
    assert report.metrics() == ("chamfer", "iou")
    assert report.values("a_method", "iou").tolist() == [0.9]
    assert report.values("a_method", "iou", "box").tolist() == []


# --- aggregation ---


def test_per_class_aggregate_matches_numpy(rng):
    rows = []
    values = {"box": rng.random(10), "tube": rng.random(7)}
    for label, vals in values.items():
        for i, v in enumerate(vals):
            rows.append((f"{label}-{i}", label, "m", "iou", float(v)))
    table = per_class_aggregate(_report(rows), "iou")
    by_class = {row["class"]: row for row in table}
    assert set(by_class) == {"box", "tube", "overall"}
    for label, vals in values.items():
        row = by_class[label]
        assert row["n"] == len(vals)
        assert row["mean"] == pytest.approx(vals.mean(), abs=1e-15)
        assert row["median"] == pytest.approx(np.median(vals), abs=1e-15)
        assert row["q1"] == pytest.approx(np.percentile(vals, 25), abs=1e-15)
        assert row["q3"] == pytest.approx(np.percentile(vals, 75), abs=1e-15)
        assert row["std"] == pytest.approx(vals.std(), abs=1e-15)
    overall = np.concatenate(list(values.values()))
    assert by_class["overall"]["n"] == 17
    assert by_class["overall"]["mean"] == pytest.approx(overall.mean(), abs=1e-15)


def test_per_class_aggregate_needs_method_when_ambiguous():
    report = _report([("s1", "box", "m1", "iou", 0.5), ("s1", "box", "m2", "iou", 0.6)])
    with pytest.raises(DataError):
        per_class_aggregate(report, "iou")
    assert per_class_aggregate(report, "iou", method="m1")[0]["mean"] == 0.5
    with pytest.raises(DataError):
        per_class_aggregate(report, "nope", method="m1")


# --- histogram ---


def test_histogram_counts_and_clamping():
    vals = [0.05, 0.05, 0.25, 0.95, 1.5, -2.0]
    counts = histogram(vals, bins=10, value_range=(0.0, 1.0))
    assert counts.sum() == len(vals)
    assert counts[0] == 3  # two 0.05s plus the clamped -2.0
    assert counts[2] == 1
    assert counts[9] == 2  # 0.95 plus the clamped 1.5


def test_histogram_validation():
    with pytest.raises(DataError):
        histogram([0.5], bins=0)
    with pytest.raises(DataError):
        histogram([0.5], value_range=(1.0, 0.0))


# --- KS test ---


def _ecdf_d_oracle(x, y) -> float:
    pts = np.concatenate([x, y])
    best = 0.0
    for t in pts:
        f1 = np.mean(x <= t)
        f2 = np.mean(y <= t)
        best = max(best, abs(f1 - f2))
    return float(best)


def _p_oracle(d, n1, n2) -> float:
    if d <= 0:
        return 1.0
    lam = math.sqrt(n1 * n2 / (n1 + n2)) * d
    total = sum((-1) ** (j - 1) * math.exp(-2 * j * j * lam * lam) for j in range(1, 500))
    return min(max(2.0 * total, 0.0), 1.0)


def test_ks_identical_samples(rng):
    a = rng.random(40)
    r = ks_two_sample(a, a.copy())
    assert r.d_stat == 0.0
    assert r.p_value == 1.0
    assert (r.n1, r.n2) == (40, 40)
    assert not r.binned


def test_ks_disjoint_samples(rng):
    a = rng.uniform(0.0, 0.3, 100)
    b = rng.uniform(0.7, 1.0, 100)
    r = ks_two_sample(a, b)
    assert r.d_stat == 1.0
    assert r.p_value < 1e-6


def test_ks_d_matches_brute_force_and_scipy(rng):
    for n1, n2 in [(13, 27), (50, 50), (8, 90)]:
        a = rng.random(n1)
        b = rng.normal(0.5, 0.25, n2)
        r = ks_two_sample(a, b)
        assert r.d_stat == pytest.approx(_ecdf_d_oracle(a, b), abs=1e-15)
        assert r.d_stat == pytest.approx(sps.ks_2samp(a, b).statistic, abs=1e-15)


def test_ks_p_matches_series_oracle(rng):
    for _ in range(5):
        a = rng.random(30)
        b = rng.random(45) ** 1.5
        r = ks_two_sample(a, b)
        assert r.p_value == pytest.approx(_p_oracle(r.d_stat, 30, 45), abs=1e-12)


def test_ks_with_ties(rng):
    # heavy ties: discrete values; D still exact over the merged support
    a = rng.integers(0, 4, 60) / 4.0
    b = rng.integers(0, 4, 60) / 4.0
    r = ks_two_sample(a, b)
    assert r.d_stat == pytest.approx(_ecdf_d_oracle(a, b), abs=1e-15)


def test_ks_binned_mode_snaps_to_centers():
    a = [0.101, 0.109]  # same bin at 50 bins over (0, 1)
    b = [0.105, 0.108]
    raw = ks_two_sample(a, b)
    snapped = ks_two_sample(a, b, binned=True)
    assert raw.d_stat > 0.0
    assert snapped.d_stat == 0.0
    assert snapped.p_value == 1.0
    assert snapped.binned


def test_ks_rejects_empty():
    with pytest.raises(DataError):
        ks_two_sample([], [0.5])
    with pytest.raises(DataError):
        ks_two_sample([0.5], [])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_ks_symmetry_property(seed):
    gen = np.random.default_rng(seed)
    a = gen.random(gen.integers(2, 30))
    b = gen.random(gen.integers(2, 30))
    r1 = ks_two_sample(a, b)
    r2 = ks_two_sample(b, a)
    assert r1.d_stat == r2.d_stat
    assert r1.p_value == r2.p_value


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_ks_monotone_transform_invariance(seed):
    gen = np.random.default_rng(seed)
    a = gen.random(25)
    b = gen.random(20)
    base = ks_two_sample(a, b)
    warped = ks_two_sample(np.exp(a), np.exp(b))
    assert warped.d_stat == base.d_stat
    assert warped.p_value == base.p_value


# --- KS heatmap ---


def _two_method_report(shift=0.0, n=6):
    rows = []
    rng = np.random.default_rng(5)
    for label in ("box", "tube", "disc"):
        vals = rng.random(n)
        for i, v in enumerate(vals):
            rows.append((f"{label}-{i}", label, "m1", "iou", float(v)))
            rows.append((f"{label}-{i}", label, "m2", "iou", float(np.clip(v + shift, 0, 1))))
    return _report(rows)


def test_heatmap_identical_methods_agree_everywhere():
    hm = ks_heatmap(_two_method_report(shift=0.0), metric="iou")
    assert hm.methods == ("m1", "m2")
    assert hm.classes == ("box", "disc", "tube")
    assert np.array_equal(hm.counts, np.full((2, 2), 3))


def test_heatmap_shifted_methods_disagree():
    hm = ks_heatmap(_two_method_report(shift=0.9, n=30), metric="iou")
    assert hm.counts[0, 0] == 3 and hm.counts[1, 1] == 3
    assert hm.counts[0, 1] == 0
    assert np.array_equal(hm.counts, hm.counts.T)


def test_heatmap_skips_tiny_classes(caplog):
    report = _report(
        [("a0", "box", "m1", "iou", 0.1), ("a1", "box", "m1", "iou", 0.2),
         ("a0", "box", "m2", "iou", 0.1), ("a1", "box", "m2", "iou", 0.2),
         ("b0", "tube", "m1", "iou", 0.5), ("b0", "tube", "m2", "iou", 0.5)]
    )
    with caplog.at_level("WARNING", logger="shapebench"):
        hm = ks_heatmap(report, metric="iou")
    assert hm.classes == ("box",)
    assert any("skipping class" in r.message for r in caplog.records)


def test_heatmap_validation():
    report = _two_method_report()
    with pytest.raises(DataError):
        ks_heatmap(report, alpha=0.0)
    with pytest.raises(DataError):
        ks_heatmap(report, methods=("m1", "zzz"))


# --- correlation and cutoffs ---


def test_pearson_matches_numpy(rng):
    x, y = rng.random(30), rng.random(30)
    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_pearson_perfect_linear():
    x = np.arange(10.0)
    assert pearson(x, 3 * x + 1) == pytest.approx(1.0, abs=1e-15)
    assert pearson(x, -2 * x) == pytest.approx(-1.0, abs=1e-15)


def test_pearson_validation():
    with pytest.raises(DataError):
        pearson([1.0, 2.0], [1.0])
    with pytest.raises(DataError):
        pearson([1.0], [2.0])
    with pytest.raises(DataError):
        pearson([1.0, 1.0], [0.5, 0.7])


def test_cutoff_fraction_counting():
    vals = [10.0, 20.0, 30.0, 40.0]
    assert cutoff_fraction(vals, 0.0) == 100.0
    assert cutoff_fraction(vals, 20.0) == 75.0  # >= is inclusive
    assert cutoff_fraction(vals, 41.0) == 0.0
    with pytest.raises(DataError):
        cutoff_fraction([], 1.0)


def test_cutoff_curve_monotone(rng):
    vals = rng.random(50) * 100
    curve = cutoff_curve(vals, np.linspace(0, 100, 21))
    fracs = [f for _, f in curve]
    assert all(b <= a for a, b in zip(fracs, fracs[1:]))
    assert curve[0][1] == 100.0


# --- exports ---


def test_write_table_csv_six_significant_digits(tmp_path):
    path = tmp_path / "t.csv"
    write_table_csv(
        path, ["class", "mean"],
        [{"class": "box", "mean": 0.123456789}, {"class": "tube", "mean": 12345678.0}],
    )
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["class", "mean"]
    assert rows[1] == ["box", "0.123457"]
    assert rows[2] == ["tube", "1.23457e+07"]


def test_write_heatmap_csv_layout(tmp_path):
    hm = ks_heatmap(_two_method_report(), metric="iou")
    path = tmp_path / "h.csv"
    write_heatmap_csv(path, hm)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["method", "m1", "m2"]
    assert rows[1][0] == "m1" and rows[2][0] == "m2"
    assert int(rows[1][2]) == hm.counts[0, 1]


def test_write_json_sorted_with_newline(tmp_path):
    path = tmp_path / "x.json"
    write_json(path, {"b": 1, "a": [1, 2]})
    text = path.read_text()
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [1, 2], "b": 1}

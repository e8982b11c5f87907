"""Statistical comparison toolkit: per-class aggregation, histograms,
two-sample Kolmogorov-Smirnov tests, pairwise method heatmaps, Pearson
correlation, and cutoff (survival) curves, plus CSV/JSON table export.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

log = logging.getLogger("shapebench")

DEFAULT_BINS = 50
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class EvalEntry:
    shape_id: str
    class_label: str
    method: str
    metric: str
    value: float


@dataclass(frozen=True)
class SkipEntry:
    shape_id: str
    class_label: str
    method: str
    reason: str


@dataclass(frozen=True)
class EvalReport:
    """Per-shape, per-method metric values plus skip records and a config
    snapshot. (shape, method, metric) triples are unique; values finite."""

    entries: tuple[EvalEntry, ...]
    skips: tuple[SkipEntry, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if not math.isfinite(e.value):
                raise DataError(f"non-finite value for {(e.shape_id, e.method, e.metric)}")
            key = (e.shape_id, e.method, e.metric)
            if key in seen:
                raise DataError(f"duplicate report entry {key}")
            seen.add(key)

    def methods(self) -> tuple[str, ...]:
        return tuple(sorted({e.method for e in self.entries}))

    def classes(self) -> tuple[str, ...]:
        return tuple(sorted({e.class_label for e in self.entries}))

    def metrics(self) -> tuple[str, ...]:
        return tuple(sorted({e.metric for e in self.entries}))

    def values(self, method: str, metric: str, class_label: str | None = None) -> np.ndarray:
        out = [e.value for e in self.entries
               if e.method == method and e.metric == metric
               and (class_label is None or e.class_label == class_label)]
        return np.asarray(out, dtype=np.float64)

    def to_json(self) -> str:
        doc = {
            "metadata": self.metadata,
            "entries": sorted(
                [[e.shape_id, e.class_label, e.method, e.metric, e.value] for e in self.entries]
            ),
            "skips": sorted(
                [[s.shape_id, s.class_label, s.method, s.reason] for s in self.skips]
            ),
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        entries = tuple(EvalEntry(*row[:4], float(row[4])) for row in doc.get("entries", []))
        skips = tuple(SkipEntry(*row) for row in doc.get("skips", []))
        return cls(entries, skips, doc.get("metadata", {}))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "EvalReport":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise DataError(f"cannot read report: {exc}") from exc


@dataclass(frozen=True)
class KSResult:
    d_stat: float
    p_value: float
    n1: int
    n2: int
    binned: bool = False


@dataclass(frozen=True)
class KSHeatmap:
    methods: tuple[str, ...]
    classes: tuple[str, ...]
    counts: np.ndarray = field(repr=False)  # (M, M) int, p >= alpha class counts


def per_class_aggregate(report: EvalReport, metric: str, method: str | None = None) -> list[dict]:
    """Summary statistics (n, mean, median, q1, q3, min, max, std with
    ddof=0) per class plus an `overall` row. `method` may be omitted only
    for single-method reports."""
    methods = report.methods()
    if method is None:
        if len(methods) != 1:
            raise DataError(f"report has methods {methods}; specify one")
        method = methods[0]
    if metric not in report.metrics():
        raise DataError(f"unknown metric {metric!r}; report has {report.metrics()}")
    rows = []
    for label in report.classes() + ("overall",):
        vals = report.values(method, metric, None if label == "overall" else label)
        if len(vals) == 0:
            continue
        rows.append({
            "class": label,
            "n": int(len(vals)),
            "mean": float(vals.mean()),
            "median": float(np.median(vals)),
            "q1": float(np.percentile(vals, 25)),
            "q3": float(np.percentile(vals, 75)),
            "min": float(vals.min()),
            "max": float(vals.max()),
            "std": float(vals.std()),
        })
    return rows


def histogram(values, bins: int = DEFAULT_BINS, value_range: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Equal-width counts, left-closed right-open with the final bin closed;
    out-of-range values clamp into the end bins."""
    lo, hi = float(value_range[0]), float(value_range[1])
    if bins < 1:
        raise DataError(f"bins must be >= 1, got {bins}")
    if not lo < hi:
        raise DataError(f"bad histogram range ({lo}, {hi})")
    vals = np.clip(np.asarray(values, dtype=np.float64), lo, hi)
    counts, _ = np.histogram(vals, bins=bins, range=(lo, hi))
    return counts.astype(np.int64)


def ks_two_sample(a, b, binned: bool = False, bins: int = DEFAULT_BINS,
                  value_range: tuple[float, float] = (0.0, 1.0)) -> KSResult:
    """Two-sample KS test. D is the exact sup ECDF difference; p uses the
    asymptotic Kolmogorov series with effective size n1*n2/(n1+n2).

    binned=True first snaps samples to the centers of a histogram binning
    (display-matched mode); raw values are the statistically sound default.
    """
    x = np.sort(np.asarray(a, dtype=np.float64).ravel())
    y = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if len(x) == 0 or len(y) == 0:
        raise DataError("ks_two_sample requires nonempty samples")
    if binned:
        x = _bin_centers(x, bins, value_range)
        y = _bin_centers(y, bins, value_range)
    n1, n2 = len(x), len(y)
    support = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, support, side="right") / n1
    cdf_y = np.searchsorted(y, support, side="right") / n2
    d = float(np.abs(cdf_x - cdf_y).max())
    return KSResult(d, _ks_p_value(d, n1, n2), n1, n2, binned=binned)


def _bin_centers(sorted_vals: np.ndarray, bins: int, value_range) -> np.ndarray:
    lo, hi = float(value_range[0]), float(value_range[1])
    width = (hi - lo) / bins
    idx = np.clip(((sorted_vals - lo) / width).astype(np.int64), 0, bins - 1)
    return np.sort(lo + (idx + 0.5) * width)


def _ks_p_value(d: float, n1: int, n2: int) -> float:
    if d <= 0.0:
        return 1.0
    lam = math.sqrt(n1 * n2 / (n1 + n2)) * d
    total = 0.0
    for j in range(1, 100_000):
        term = math.exp(-2.0 * j * j * lam * lam)
        total += -term if j % 2 == 0 else term
        if term < 1e-8:
            break
    return min(max(2.0 * total, 0.0), 1.0)


def ks_heatmap(report: EvalReport, methods=None, metric: str = "iou",
               alpha: float = DEFAULT_ALPHA, binned: bool = False) -> KSHeatmap:
    """Cell (m1, m2) counts the classes whose within-class value
    distributions under the two methods are NOT distinguished by the KS test
    (p >= alpha). Classes with fewer than 2 values under any method are
    skipped with a warning."""
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must be in (0, 1), got {alpha}")
    if methods is None:
        methods = report.methods()
    methods = tuple(methods)
    for m in methods:
        if m not in report.methods():
            raise DataError(f"report has no entries for method {m!r}")
    used = []
    for label in report.classes():
        sizes = [len(report.values(m, metric, label)) for m in methods]
        if min(sizes) < 2:
            log.warning("ks_heatmap: skipping class %r (fewer than 2 values)", label)
            continue
        used.append(label)
    counts = np.zeros((len(methods), len(methods)), dtype=np.int64)
    for i, m1 in enumerate(methods):
        for j, m2 in enumerate(methods):
            if j < i:
                continue
            agree = 0
            for label in used:
                r = ks_two_sample(report.values(m1, metric, label),
                                  report.values(m2, metric, label), binned=binned)
                if r.p_value >= alpha:
                    agree += 1
            counts[i, j] = counts[j, i] = agree
    return KSHeatmap(methods, tuple(used), counts)


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    xv = np.asarray(x, dtype=np.float64).ravel()
    yv = np.asarray(y, dtype=np.float64).ravel()
    if len(xv) != len(yv):
        raise DataError("pearson inputs must have equal length")
    if len(xv) < 2:
        raise DataError("pearson needs at least 2 points")
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise DataError("zero variance input; correlation undefined")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def cutoff_fraction(values, cutoff: float) -> float:
    """Percentage of values >= cutoff."""
    vals = np.asarray(values, dtype=np.float64).ravel()
    if len(vals) == 0:
        raise DataError("cutoff_fraction of an empty list")
    return 100.0 * float((vals >= cutoff).sum()) / len(vals)


def cutoff_curve(values, cutoffs) -> list[tuple[float, float]]:
    """Survival curve: cutoff_fraction swept over the given cutoffs."""
    return [(float(c), cutoff_fraction(values, float(c))) for c in cutoffs]


def _fmt6(value) -> str:
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def write_table_csv(path, fieldnames: list[str], rows: list[dict]) -> None:
    """CSV with a header row; floats at 6 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt6(row[k]) for k in fieldnames])


def write_heatmap_csv(path, heatmap: KSHeatmap) -> None:
    """Method-by-method matrix with labels on the first row and column."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", *heatmap.methods])
        for i, m in enumerate(heatmap.methods):
            writer.writerow([m, *[int(v) for v in heatmap.counts[i]]])


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")

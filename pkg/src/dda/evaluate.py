"""Threshold search on bounded outputs, confusion metrics, separability columns."""
import csv
import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import kernels
from .stats import summarize

OBJECTIVES = ("f1", "accuracy", "miou")

TABLE_COLUMNS = ("method", "lambda_p", "accuracy", "f1", "miou", "mu_gap", "var_0", "var_1")


@dataclass
class SegMetrics:
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    iou_0: float
    iou_1: float
    miou: float
    mu_gap: Optional[float] = None
    var_0: Optional[float] = None
    var_1: Optional[float] = None

    def to_dict(self):
        return asdict(self)


@dataclass
class Threshold:
    value: float
    objective: str
    score: float


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def rates(tp, tn, fp, fn):
    """All confusion-derived rates; 0 wherever a denominator is 0.

    Works elementwise on arrays so the threshold search and the per-threshold
    oracle produce the same floats for the same counts.
    """
    tp, tn, fp, fn = (np.asarray(a, dtype=np.float64) for a in (tp, tn, fp, fn))
    accuracy = _ratio(tp + tn, tp + tn + fp + fn)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2.0 * tp, 2.0 * tp + fp + fn)
    iou_0 = _ratio(tn, tn + fp + fn)
    iou_1 = _ratio(tp, tp + fp + fn)
    miou = (iou_0 + iou_1) / 2.0
    return dict(accuracy=accuracy, precision=precision, recall=recall, f1=f1,
                iou_0=iou_0, iou_1=iou_1, miou=miou)


def confusion(predictions, labels):
    p = np.asarray(predictions).ravel() == 1
    m = np.asarray(labels).ravel() == 1
    if p.shape != m.shape:
        raise ValueError(f"predictions and labels differ in length: {p.size} != {m.size}")
    tp = int(np.count_nonzero(p & m))
    fp = int(np.count_nonzero(p & ~m))
    fn = int(np.count_nonzero(~p & m))
    tn = int(p.size - tp - fp - fn)
    return tp, tn, fp, fn


def compute_metrics(predictions, labels, projections=None) -> SegMetrics:
    tp, tn, fp, fn = confusion(predictions, labels)
    r = {k: float(v) for k, v in rates(tp, tn, fp, fn).items()}
    mu_gap = var_0 = var_1 = None
    if projections is not None:
        st = summarize(projections, labels, with_gradients=False)
        if st.both_present:
            mu_gap = st.mean_1 - st.mean_0
        var_0, var_1 = st.var_0, st.var_1
    return SegMetrics(tp, tn, fp, fn, mu_gap=mu_gap, var_0=var_0, var_1=var_1, **r)


def threshold_grid(grid_steps):
    if grid_steps < 2:
        raise ValueError("grid_steps must be at least 2")
    return np.arange(grid_steps, dtype=np.float64) / (grid_steps - 1)


def threshold_search(projections, labels, objective="f1", grid_steps=256) -> Threshold:
    """Best threshold on the grid ``k / (grid_steps - 1)``; ties go to the lowest.

    An element is classified positive when its projection is ``>=`` the threshold.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
    v = np.ascontiguousarray(projections, dtype=np.float64).ravel()
    m = np.ascontiguousarray(labels, dtype=np.int64).ravel()
    if v.shape != m.shape:
        raise ValueError(f"projections and labels differ in length: {v.size} != {m.size}")
    n1 = int(np.count_nonzero(m == 1))
    n0 = m.size - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("threshold search needs both classes")
    grid = threshold_grid(grid_steps)
    tp, fp = kernels.threshold_counts(v, m, grid)
    scores = rates(tp, n0 - fp, fp, n1 - tp)[objective]
    k = int(np.argmax(scores))
    return Threshold(float(grid[k]), objective, float(scores[k]))


def class_histogram(projections, labels, bins=32):
    """Per-class counts of projected values over ``bins`` equal cells of [0, 1]."""
    v = np.asarray(projections, dtype=np.float64).ravel()
    m = np.asarray(labels).ravel()
    edges = np.linspace(0.0, 1.0, bins + 1)
    c0, _ = np.histogram(v[m == 0], bins=edges)
    c1, _ = np.histogram(v[m == 1], bins=edges)
    return edges, c0, c1


def write_histogram_csv(path, projections, labels, bins=32):
    edges, c0, c1 = class_histogram(projections, labels, bins)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count_c0", "count_c1"])
        for k in range(bins):
            w.writerow([f"{edges[k]:.6f}", f"{edges[k + 1]:.6f}", int(c0[k]), int(c1[k])])


def table_row(method, lambda_p, metrics: SegMetrics):
    def fmt(x):
        return "" if x is None else repr(float(x))
    return [method, "" if lambda_p is None else repr(float(lambda_p)),
            fmt(metrics.accuracy), fmt(metrics.f1), fmt(metrics.miou),
            fmt(metrics.mu_gap), fmt(metrics.var_0), fmt(metrics.var_1)]


def write_table_csv(path, rows):
    """``rows``: iterable of ``(method, lambda_p, SegMetrics)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for method, lambda_p, metrics in rows:
            w.writerow(table_row(method, lambda_p, metrics))


def write_records(path, records):
    """Line-delimited JSON, one record per line."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

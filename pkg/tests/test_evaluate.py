import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dda import evaluate
from dda.evaluate import compute_metrics, threshold_search

from oracles import brute_force_threshold, random_instance


def test_threshold_example():
    t = threshold_search([0.1, 0.4, 0.6, 0.9], [0, 0, 1, 1], "f1", 256)
    assert t.value == 103 / 255
    assert t.value == pytest.approx(0.40392, abs=1e-5)
    assert t.score == 1.0


def test_threshold_constant_input_returns_lowest():
    t = threshold_search([0.5] * 6, [0, 1, 0, 1, 1, 0], "f1", 256)
    assert t.value == 0.0
    assert t.score == pytest.approx(2 / 3)


def test_threshold_inverted_projections():
    v = [0.9, 0.8, 0.2, 0.1]
    m = [0, 0, 1, 1]
    t = threshold_search(v, m)
    # best achievable is "everything positive"
    assert t.value == 0.0 and t.score == pytest.approx(2 / 3)


def test_threshold_errors():
    with pytest.raises(ValueError, match="both classes"):
        threshold_search([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        threshold_search([0.1, 0.2], [0, 1], grid_steps=1)
    with pytest.raises(ValueError):
        threshold_search([0.1, 0.2], [0, 1], objective="auc")


@pytest.mark.parametrize("objective", ["f1", "accuracy", "miou"])
def test_threshold_matches_brute_force(rng, objective):
    for _ in range(60):
        v, m = random_instance(rng)
        t = threshold_search(v, m, objective, 256)
        ref_t, ref_score = brute_force_threshold(list(v), list(m), objective, 256)
        assert t.value == ref_t
        assert t.score == pytest.approx(float(ref_score), rel=1e-15)


def test_metric_examples():
    perfect = compute_metrics([0, 1, 1, 0], [0, 1, 1, 0])
    for name in ("accuracy", "precision", "recall", "f1", "iou_0", "iou_1", "miou"):
        assert getattr(perfect, name) == 1.0
    bg = compute_metrics([0] * 10, [1, 1] + [0] * 8)
    assert (bg.accuracy, bg.recall, bg.f1, bg.iou_1, bg.iou_0, bg.miou) == (0.8, 0.0, 0.0, 0.0, 0.8, 0.4)
    assert bg.precision == 0.0  # zero convention: no positive predictions


def test_zero_convention():
    m = compute_metrics([0, 0], [0, 0])
    assert (m.precision, m.recall, m.f1, m.iou_1) == (0.0, 0.0, 0.0, 0.0)
    assert m.iou_0 == 1.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        compute_metrics([0, 1], [0, 1, 1])


def test_projection_statistics():
    m = compute_metrics([0, 0, 1, 1], [0, 0, 1, 1], projections=[0.1, 0.3, 0.7, 0.9])
    assert m.mu_gap == pytest.approx(0.6)
    assert m.var_0 == pytest.approx(0.02) and m.var_1 == pytest.approx(0.02)
    one = compute_metrics([1, 1], [1, 1], projections=[0.2, 0.4])
    assert one.mu_gap is None


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_metric_identities(pairs):
    pred, lab = zip(*pairs)
    m = compute_metrics(pred, lab)
    assert m.tp + m.tn + m.fp + m.fn == len(pairs)
    assert m.miou == pytest.approx((m.iou_0 + m.iou_1) / 2)
    if m.precision + m.recall > 0:
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
    for name in ("accuracy", "precision", "recall", "f1", "iou_0", "iou_1", "miou"):
        assert 0.0 <= getattr(m, name) <= 1.0


def test_recall_monotone_in_threshold(rng):
    v = rng.uniform(size=200)
    lab = rng.integers(0, 2, 200)
    recalls = [compute_metrics((v >= t).astype(int), lab).recall for t in evaluate.threshold_grid(64)]
    assert all(a >= b for a, b in zip(recalls, recalls[1:]))


def test_histogram_and_table(tmp_path, rng):
    v = rng.uniform(size=100)
    lab = rng.integers(0, 2, 100)
    edges, c0, c1 = evaluate.class_histogram(v, lab, bins=8)
    assert c0.sum() + c1.sum() == 100 and edges[0] == 0.0 and edges[-1] == 1.0
    evaluate.write_histogram_csv(tmp_path / "h.csv", v, lab, bins=8)
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 9

    m = compute_metrics((v > 0.5).astype(int), lab, v)
    evaluate.write_table_csv(tmp_path / "t.csv", [("PDDA", 0.1, m), ("LDA", None, m)])
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert tuple(rows[0]) == evaluate.TABLE_COLUMNS
    assert rows[2][1] == "" and float(rows[1][3]) == m.f1

    evaluate.write_records(tmp_path / "r.jsonl", [m.to_dict(), {"a": 1}])
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["f1"] == m.f1 and len(lines) == 2

"""Confusion tallies, IoU/precision math, curves, and report serialization."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plelidar import evaluation as ev
from plelidar.errors import DataError, FormatError
from plelidar.lidar_io import LabelMap


class Pred:
    """Minimal prediction wrapper: semantic array plus optional valid mask."""

    def __init__(self, semantic, valid=None):
        self.semantic = np.asarray(semantic, dtype=np.int32)
        if valid is not None:
            self.valid = np.asarray(valid, dtype=bool)


def _gt(sem, frame_id=0):
    sem = np.asarray(sem)
    return LabelMap(sem, np.zeros(len(sem), dtype=int), frame_id=frame_id)


def test_hand_tally():
    cm = ev.ConfusionMatrix([1, 2])
    ev.accumulate(cm, _gt([1, 1, 2, 2, 1]), Pred([1, 2, 2, 1, 1]))
    assert cm.counts.tolist() == [[2, 1], [1, 1]]


def test_ignore_class_rows_dropped():
    cm = ev.ConfusionMatrix([0, 1, 2])
    assert cm.class_ids == (1, 2)
    ev.accumulate(cm, _gt([0, 0, 1]), Pred([1, 2, 1]))
    assert cm.counts.sum() == 1
    assert cm.counts[0, 0] == 1


def test_invalid_predictions_skipped():
    cm = ev.ConfusionMatrix([1, 2])
    ev.accumulate(cm, _gt([1, 1]), Pred([2, 2], valid=[False, True]))
    assert cm.counts.tolist() == [[0, 1], [0, 0]]


def test_length_mismatch_mentions_frame():
    cm = ev.ConfusionMatrix([1])
    with pytest.raises(DataError, match="frame 9"):
        ev.accumulate(cm, _gt([1, 1], frame_id=9), Pred([1]))


def test_unknown_class_rejected():
    cm = ev.ConfusionMatrix([1, 2])
    with pytest.raises(DataError, match="outside"):
        ev.accumulate(cm, _gt([1, 3]), Pred([1, 1]))


def test_no_classes_rejected():
    with pytest.raises(DataError):
        ev.ConfusionMatrix([0])


def test_metrics_hand_case():
    # counts [[8, 2], [4, 6]]: IoU_1 = 8/14, IoU_2 = 6/12
    cm = ev.ConfusionMatrix([1, 2])
    cm.counts[:] = [[8, 2], [4, 6]]
    report = ev.metrics(cm)
    assert report.per_class_iou[1] == pytest.approx(8 / 14)
    assert report.per_class_iou[2] == pytest.approx(6 / 12)
    assert report.miou == pytest.approx(0.5357142857142857)
    assert report.per_class_precision[1] == pytest.approx(8 / 12)
    assert report.per_class_precision[2] == pytest.approx(6 / 8)
    assert report.point_counts == {1: 10, 2: 10}


def test_miou_averages_only_seen_classes():
    cm = ev.ConfusionMatrix([1, 2, 3])
    ev.accumulate(cm, _gt([1, 1]), Pred([1, 2]))
    report = ev.metrics(cm)
    # class 3 appears nowhere: no IoU entry, not averaged
    assert 3 not in report.per_class_iou
    # class 2 has an IoU entry (it was predicted) but no ground-truth
    # points, so only class 1 reaches the mean
    assert report.per_class_iou[2] == 0.0
    assert report.miou == pytest.approx(0.5)
    # class 2 was predicted but never true: precision 0 counts toward the mean
    assert report.per_class_precision == {1: 1.0, 2: 0.0}
    assert report.mprecision == pytest.approx(0.5)


def test_predicted_never_true_has_zero_iou_entry():
    cm = ev.ConfusionMatrix([1, 2])
    ev.accumulate(cm, _gt([1]), Pred([2]))
    report = ev.metrics(cm)
    assert report.per_class_iou[2] == 0.0
    # but class 2 has no ground-truth points, so it stays out of mIoU
    assert report.miou == 0.0


def test_empty_matrix_metrics():
    cm = ev.ConfusionMatrix([1, 2])
    report = ev.metrics(cm)
    assert report.miou == 0.0
    assert report.mprecision == 0.0
    assert report.per_class_iou == {}


def test_perfect_prediction():
    cm = ev.ConfusionMatrix([1, 9, 30])
    sem = np.array([1, 9, 30, 1, 9])
    ev.accumulate(cm, _gt(sem), Pred(sem))
    report = ev.metrics(cm)
    assert report.miou == 1.0
    assert report.mprecision == 1.0


def test_merge_and_order_invariance():
    rng = np.random.default_rng(3)
    frames = [
        (_gt(rng.integers(0, 3, 50)), Pred(rng.integers(1, 3, 50)))
        for _ in range(4)
    ]
    whole = ev.ConfusionMatrix([1, 2])
    for gt, pred in frames:
        ev.accumulate(whole, gt, pred)
    parts = []
    for gt, pred in frames:
        cm = ev.ConfusionMatrix([1, 2])
        parts.append(ev.accumulate(cm, gt, pred))
    merged = parts[3].merge(parts[1]).merge(parts[0]).merge(parts[2])
    assert np.array_equal(merged.counts, whole.counts)


def test_merge_requires_same_classes():
    with pytest.raises(DataError):
        ev.ConfusionMatrix([1]).merge(ev.ConfusionMatrix([1, 2]))


def test_transpose_swaps_precision_and_recall():
    cm = ev.ConfusionMatrix([1, 2])
    cm.counts[:] = [[8, 2], [4, 6]]
    flipped = ev.metrics(cm.transposed())
    # recall of class 1 in the original = 8/10
    assert flipped.per_class_precision[1] == pytest.approx(8 / 10)
    assert flipped.per_class_precision[2] == pytest.approx(6 / 10)
    # IoU is symmetric under transposition
    assert flipped.miou == pytest.approx(ev.metrics(cm).miou)


def test_interval_curve_groups_and_sorts():
    def rep(miou):
        return ev.EvalReport({}, miou, {}, 0.0)

    curve = ev.interval_curve(
        [(2, rep(0.4)), (-1, rep(0.9)), (1, rep(0.7)), (2, rep(0.6))]
    )
    assert curve == [(1, pytest.approx(0.8)), (2, pytest.approx(0.5))]


def _sample_report():
    rng = np.random.default_rng(5)
    cm = ev.ConfusionMatrix([1, 9, 30])
    gt = rng.choice([0, 1, 9, 30], 300)
    pred = rng.choice([1, 9, 30], 300)
    ev.accumulate(cm, _gt(gt), Pred(pred))
    return ev.metrics(cm)


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_report_round_trip(tmp_path, fmt):
    report = _sample_report()
    path = tmp_path / f"report.{fmt}"
    ev.write_report(report, path, format=fmt)
    again = ev.read_report(path, format=fmt)
    assert again.per_class_iou == report.per_class_iou
    assert again.per_class_precision == report.per_class_precision
    assert again.miou == report.miou
    assert again.mprecision == report.mprecision
    assert again.point_counts == report.point_counts


def test_report_csv_shape(tmp_path):
    report = _sample_report()
    path = tmp_path / "report.csv"
    ev.write_report(report, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "class,iou,precision,count"
    assert lines[-1].startswith("mean,")


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_curve_round_trip(tmp_path, fmt):
    curve = [(1, 0.875), (2, 0.625), (3, 1.0 / 3.0)]
    path = tmp_path / f"curve.{fmt}"
    ev.write_curve(curve, path, format=fmt)
    assert ev.read_curve(path, format=fmt) == curve


def test_read_report_rejects_garbage(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("not,a,report\n")
    with pytest.raises(FormatError):
        ev.read_report(path)


@settings(max_examples=40, deadline=None)
@given(
    counts=st.lists(
        st.lists(st.integers(0, 50), min_size=3, max_size=3),
        min_size=3,
        max_size=3,
    )
)
def test_iou_never_exceeds_precision_or_recall(counts):
    cm = ev.ConfusionMatrix([1, 2, 3])
    cm.counts[:] = counts
    report = ev.metrics(cm)
    recall_view = ev.metrics(cm.transposed()).per_class_precision
    for c, iou in report.per_class_iou.items():
        assert 0.0 <= iou <= 1.0
        if c in report.per_class_precision:
            assert iou <= report.per_class_precision[c] + 1e-12
        if c in recall_view:
            assert iou <= recall_view[c] + 1e-12


@settings(max_examples=30, deadline=None)
@given(
    gt=st.lists(st.sampled_from([0, 1, 2]), min_size=1, max_size=60),
)
def test_self_agreement_is_perfect(gt):
    if all(g == 0 for g in gt):
        cm = ev.ConfusionMatrix([1, 2])
        ev.accumulate(cm, _gt(gt), Pred(gt))
        assert ev.metrics(cm).miou == 0.0
        return
    cm = ev.ConfusionMatrix([1, 2])
    ev.accumulate(cm, _gt(gt), Pred(gt))
    assert ev.metrics(cm).miou == 1.0

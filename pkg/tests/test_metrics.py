import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ktbench.baselines import Prediction
from ktbench.metrics import (
    ConfusionCounts,
    MetricReport,
    UndefinedMetricError,
    auc,
    binarize,
    classification_metrics,
    confusion,
    metric_report,
    rmse,
)


# --- independent brute-force oracles ----------------------------------------

def auc_oracle(labels, probs):
    """Direct pairwise Mann-Whitney count."""
    pos = [p for y, p in zip(labels, probs) if y == 1]
    neg = [p for y, p in zip(labels, probs) if y == 0]
    total = 0.0
    for pp in pos:
        for pn in neg:
            if pp > pn:
                total += 1.0
            elif pp == pn:
                total += 0.5
    return total / (len(pos) * len(neg))


def metrics_oracle(labels, pred_labels):
    tp = sum(1 for y, z in zip(labels, pred_labels) if y == 1 and z == 1)
    tn = sum(1 for y, z in zip(labels, pred_labels) if y == 0 and z == 0)
    fp = sum(1 for y, z in zip(labels, pred_labels) if y == 0 and z == 1)
    fn = sum(1 for y, z in zip(labels, pred_labels) if y == 1 and z == 0)
    total = tp + tn + fp + fn
    acc = (tp + tn) / total
    sens = tp / (tp + fn) if tp + fn else 0.0
    spec = tn / (tn + fp) if tn + fp else 0.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    return acc, 0.5 * (sens + spec), prec, sens, f1


def rmse_oracle(labels, probs):
    return math.sqrt(sum((y - p) ** 2 for y, p in zip(labels, probs)) / len(labels))


# --- binarize ---------------------------------------------------------------

def test_binarize_threshold_and_tie():
    assert binarize(0.51) == 1
    assert binarize(0.49) == 0
    assert binarize(0.5) == 1  # tie breaks to CORRECT


# --- confusion --------------------------------------------------------------

def test_confusion_perfect():
    assert confusion([1, 0], [1, 0]) == ConfusionCounts(tp=1, tn=1, fp=0, fn=0)


def test_confusion_hand_count():
    labels = [1, 1, 1, 1, 0, 0, 0, 0]
    preds = [1, 1, 0, 0, 0, 0, 0, 1]
    assert confusion(labels, preds) == ConfusionCounts(tp=2, tn=3, fp=1, fn=2)


def test_confusion_degenerate_all_positive():
    c = confusion([1, 1, 1], [1, 1, 1])
    assert (c.fp, c.fn, c.tn) == (0, 0, 0)


def test_confusion_length_mismatch():
    with pytest.raises(UndefinedMetricError):
        confusion([1, 0], [1])


# --- classification metrics -------------------------------------------------

def test_classification_metrics_hand_values():
    m = classification_metrics(ConfusionCounts(tp=2, tn=3, fp=1, fn=2))
    assert m.balanced_accuracy == pytest.approx(0.5 * (0.5 + 0.75))
    assert m.f1 == pytest.approx(4 / 7)
    assert m.accuracy == pytest.approx(5 / 8)


def test_constant_correct_predictor_metrics():
    # every prediction CORRECT on imbalanced labels: recall 1, bal acc 0.5
    labels = [1] * 77 + [0] * 23
    preds = [1] * 100
    m = classification_metrics(confusion(labels, preds))
    assert m.recall == 1.0
    assert m.balanced_accuracy == 0.5


def test_zero_tp_flags_degenerate():
    # all-WRONG predictions on mixed labels: precision/recall/f1 all zero
    m = classification_metrics(ConfusionCounts(tp=0, tn=5, fp=0, fn=5))
    assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
    assert "precision" in m.degenerate


# --- auc ----------------------------------------------------------------

def test_auc_constant_probabilities():
    assert auc([1, 0, 1, 0], [0.7, 0.7, 0.7, 0.7]) == 0.5


def test_auc_perfect_separation():
    assert auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0


def test_auc_worked_example():
    # pairs: (0.2 vs 0.4) wrong, (0.6 vs 0.4) right -> 0.5
    assert auc([1, 0, 1], [0.2, 0.4, 0.6]) == pytest.approx(0.5)


def test_auc_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        auc([1, 1], [0.2, 0.4])


@settings(max_examples=60, deadline=None)
@given(
    # probabilities on a 1e-3 grid: ties stay ties and distinct values stay
    # distinct after the transform (float64 cannot collapse a 1e-3 gap here)
    st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1000)), min_size=4, max_size=60),
    st.floats(0.1, 5.0),
    st.floats(-1.0, 1.0),
)
def test_auc_invariant_under_monotone_transform(pairs, scale, shift):
    labels = [y for y, _ in pairs]
    probs = [p / 1000.0 for _, p in pairs]
    if len(set(labels)) < 2:
        return
    base = auc(labels, probs)
    # strictly monotone map: affine then tanh-squash
    mapped = [math.tanh(scale * p + shift) for p in probs]
    assert auc(labels, mapped) == pytest.approx(base, abs=1e-12)


# --- rmse ---------------------------------------------------------------

def test_rmse_perfect():
    assert rmse([1, 0, 1], [1.0, 0.0, 1.0]) == 0.0


def test_rmse_worked_example():
    assert rmse([1, 0], [0.8, 0.3]) == pytest.approx(math.sqrt(0.065))


def test_rmse_constant_half():
    assert rmse([1, 0, 0, 1, 1], [0.5] * 5) == 0.5


# --- metric_report ----------------------------------------------------------

def _preds(probs):
    return [Prediction.from_probability(p) for p in probs]


def test_metric_report_assembles_everything():
    labels = [1, 0, 1, 0, 1]
    probs = [0.9, 0.2, 0.7, 0.6, 0.4]
    report = metric_report(labels, _preds(probs), failures=2)
    assert report.n_points == 5
    assert report.failure_count == 2
    assert report.auc == pytest.approx(auc(labels, probs))
    assert report.rmse == pytest.approx(rmse(labels, probs))


def test_metric_report_empty_is_error():
    with pytest.raises(UndefinedMetricError):
        metric_report([], [], failures=10)


def test_metric_report_json_roundtrip():
    labels = [1, 0, 1]
    report = metric_report(labels, _preds([0.9, 0.2, 0.6]))
    again = MetricReport.from_json(report.to_json())
    assert again == report


# --- oracle equivalence (mirrors the acceptance gate, smaller) --------------

def test_all_metrics_agree_with_oracles_on_random_instances(rng):
    for _ in range(50):
        n = int(rng.integers(4, 50))
        labels = rng.integers(0, 2, size=n).tolist()
        if len(set(labels)) < 2:
            labels[0], labels[1] = 0, 1
        probs = np.round(rng.random(n), 3).tolist()  # rounding forces ties
        pred_labels = [binarize(p) for p in probs]

        acc, bal, prec, rec, f1 = metrics_oracle(labels, pred_labels)
        m = classification_metrics(confusion(labels, pred_labels))
        assert m.accuracy == pytest.approx(acc, abs=1e-12)
        assert m.balanced_accuracy == pytest.approx(bal, abs=1e-12)
        assert m.precision == pytest.approx(prec, abs=1e-12)
        assert m.recall == pytest.approx(rec, abs=1e-12)
        assert m.f1 == pytest.approx(f1, abs=1e-12)
        assert auc(labels, probs) == pytest.approx(auc_oracle(labels, probs), abs=1e-12)
        assert rmse(labels, probs) == pytest.approx(rmse_oracle(labels, probs), abs=1e-12)


def test_accuracy_identity_on_random_counts(rng):
    # accuracy = (recall*P + specificity*N) / (P + N)
    for _ in range(50):
        tp, tn, fp, fn = (int(x) for x in rng.integers(0, 30, size=4))
        if tp + fn == 0 or tn + fp == 0:
            continue
        m = classification_metrics(ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn))
        p_count, n_count = tp + fn, tn + fp
        specificity = tn / n_count
        expect = (m.recall * p_count + specificity * n_count) / (p_count + n_count)
        assert m.accuracy == pytest.approx(expect, abs=1e-12)

import pytest

from fuzzlab.errors import ConfigError, DataError
from fuzzlab.metrics import (
    compute_metrics,
    confusion_from_labels,
    f1_score,
    session_fractions,
    session_threshold,
    threshold_sweep,
)
from fuzzlab.models import Confusion


def rounded(metrics):
    return round(metrics.accuracy, 4), round(metrics.f1, 4), round(metrics.fpr_paper, 4)


def test_pth_confusion():
    """F1 follows the standard positive-class formula."""
    metrics = compute_metrics(Confusion(tn=289, fp=3, fn=2, tp=345))
    assert rounded(metrics) == (0.9922, 0.9928, 0.0086)


def test_arp_confusion():
    assert rounded(compute_metrics(Confusion(tn=1188, fp=5, fn=1, tp=1206))) == (0.9975, 0.9975, 0.0041)


def test_dns_confusion():
    """The published rate for this matrix matches fp / (fp + tn)."""
    metrics = compute_metrics(Confusion(tn=3878, fp=11, fn=10, tp=3833))
    assert round(metrics.accuracy, 4) == 0.9973
    assert round(metrics.f1, 4) == 0.9973
    assert round(metrics.fpr_standard, 4) == 0.0028
    assert round(metrics.fpr_paper, 4) == 0.0029


def test_telnet_confusion():
    assert rounded(compute_metrics(Confusion(tn=1296, fp=1, fn=1, tp=1324))) == (0.9992, 0.9992, 0.0008)


def test_perfect_classifier():
    metrics = compute_metrics(Confusion(tn=10, fp=0, fn=0, tp=7))
    assert (metrics.accuracy, metrics.f1, metrics.fpr_paper, metrics.fpr_standard) == (1.0, 1.0, 0.0, 0.0)
    assert metrics.undefined == []


def test_undefined_metrics():
    """No positive predictions leaves precision, F1 and fpr_paper undefined."""
    metrics = compute_metrics(Confusion(tn=5, fp=0, fn=3, tp=0))
    assert metrics.precision is None
    assert metrics.f1 is None
    assert metrics.fpr_paper is None
    assert set(metrics.undefined) == {"precision", "f1", "fpr_paper"}
    assert metrics.recall == 0.0


def test_negative_counts_rejected():
    with pytest.raises(DataError):
        compute_metrics(Confusion(tn=-1, fp=0, fn=0, tp=1))


def test_confusion_from_labels():
    c = confusion_from_labels([0, 0, 1, 1, 1], [0, 1, 1, 0, 1])
    assert c == Confusion(tn=1, fp=1, fn=1, tp=2)
    with pytest.raises(DataError):
        confusion_from_labels([0, 1], [0])


def test_f1_score_undefined_is_zero():
    assert f1_score([0, 0], [0, 0]) == 0.0
    assert f1_score([1, 0], [1, 0]) == 1.0


def test_session_fractions():
    fractions = session_fractions(["b", "a", "b", "b"], [1, 0, 0, 1])
    assert list(fractions) == ["b", "a"]
    assert fractions["b"] == pytest.approx(2 / 3)
    assert fractions["a"] == 0.0


def test_session_threshold():
    assert session_threshold([0.6, 0.2], 0.5) == [True, False]
    assert session_threshold([0.5], 0.5) == [True]
    with pytest.raises(ConfigError):
        session_threshold([0.5], 1.0)


def test_threshold_sweep_is_monotone():
    fractions = {f"s{i}": i / 10 for i in range(11)}
    rows = threshold_sweep(fractions)
    assert [r.threshold for r in rows] == [0.3, 0.4, 0.5, 0.6, 0.7]
    detected = [r.detected for r in rows]
    assert detected == sorted(detected, reverse=True)
    assert rows[0].detected == 8
    assert rows[0].rate == pytest.approx(8 / 11)

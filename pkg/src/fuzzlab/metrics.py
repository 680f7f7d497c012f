"""Confusion matrices, detection metrics and session-level thresholds."""

from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .models import Confusion, Metrics, ThresholdRow

DEFAULT_THRESHOLDS = (0.3, 0.4, 0.5, 0.6, 0.7)


def confusion_from_labels(y_true: Sequence[int], y_pred: Sequence[int]) -> Confusion:
    """Positive class is malicious (1)."""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise DataError(f"{t.shape[0]} labels vs {p.shape[0]} predictions")
    return Confusion(
        tn=int(((t == 0) & (p == 0)).sum()),
        fp=int(((t == 0) & (p == 1)).sum()),
        fn=int(((t == 1) & (p == 0)).sum()),
        tp=int(((t == 1) & (p == 1)).sum()),
    )


def _ratio(num: float, den: float, name: str, undefined: list[str]) -> Optional[float]:
    if den == 0:
        undefined.append(name)
        return None
    return num / den


def compute_metrics(confusion: Confusion) -> Metrics:
    """Accuracy, precision, recall, F1 and both false-positive-rate conventions.

    fpr_paper is fp / (fp + tp), fpr_standard is fp / (fp + tn). A metric
    with a zero denominator is None and named in Metrics.undefined.
    """
    c = confusion
    if min(c.tn, c.fp, c.fn, c.tp) < 0:
        raise DataError(f"negative confusion counts {c}")
    undefined: list[str] = []
    accuracy = _ratio(c.tn + c.tp, c.total, "accuracy", undefined)
    precision = _ratio(c.tp, c.tp + c.fp, "precision", undefined)
    recall = _ratio(c.tp, c.tp + c.fn, "recall", undefined)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
        undefined.append("f1")
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return Metrics(
        confusion=c,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        fpr_paper=_ratio(c.fp, c.fp + c.tp, "fpr_paper", undefined),
        fpr_standard=_ratio(c.fp, c.fp + c.tn, "fpr_standard", undefined),
        undefined=undefined,
    )


def f1_score(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    """F1 with the undefined case reported as 0."""
    f1 = compute_metrics(confusion_from_labels(y_true, y_pred)).f1
    return 0.0 if f1 is None else f1


def session_fractions(
    sessions: Sequence[str], labels: Sequence[int]
) -> dict[str, float]:
    """Fraction of samples predicted malicious, per session id, in first-seen order."""
    totals: dict[str, list[int]] = {}
    for sid, label in zip(sessions, labels):
        entry = totals.setdefault(sid, [0, 0])
        entry[0] += int(label)
        entry[1] += 1
    return {sid: hits / n for sid, (hits, n) in totals.items()}


def session_threshold(fractions: Iterable[float], threshold: float) -> list[bool]:
    """A session is malicious when its malicious fraction is >= threshold."""
    if not 0 < threshold < 1:
        raise ConfigError(f"threshold must be in (0, 1), got {threshold}")
    return [f >= threshold for f in fractions]


def threshold_sweep(
    fractions: Mapping[str, float], thresholds: Sequence[float] = DEFAULT_THRESHOLDS
) -> list[ThresholdRow]:
    rows = []
    n = len(fractions)
    for threshold in thresholds:
        detected = sum(session_threshold(fractions.values(), threshold))
        rows.append(ThresholdRow(threshold, n, detected, detected / n if n else 0.0))
    return rows

"""Similarity-threshold calibration and retrieval metrics.

A pair is predicted positive iff score >= tau. Candidate thresholds are
the distinct observed scores, so a calibrated tau reproduces its own
training labels. Precision at a threshold that predicts nothing positive
is defined as 1.0 (vacuous), which cannot occur at candidate thresholds
but keeps the sweep total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import NoPositivesError

CRITERIA = ("best_accuracy", "best_precision", "mean_positive")

# Thresholds observed in upstream calibrations of the same pipeline; handy
# defaults when no labeled data is available to sweep.
NAMED_THRESHOLDS = {
    "qe": 0.825,
    "qe_strict": 0.875,
    "qa": 0.688,
}


@dataclass(frozen=True)
class ThresholdPoint:
    threshold: float
    accuracy: float
    precision: float
    recall: float


@dataclass
class ThresholdCurve:
    points: list[ThresholdPoint]
    selected: Optional[tuple[str, float]] = None  # (criterion, tau)

    def to_csv(self) -> str:
        lines = ["threshold,accuracy,precision,recall"]
        for p in self.points:
            lines.append(f"{p.threshold!r},{p.accuracy!r},{p.precision!r},{p.recall!r}")
        return "\n".join(lines) + "\n"


@dataclass
class RetrievalEval:
    accuracy_at_1: float
    precision_at_1: float
    recall_at_1: float
    answered: int
    evaluated: int


def _check_scores_labels(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape:
        raise ValueError(f"scores and labels lengths differ: {s.shape} vs {y.shape}")
    if s.size == 0:
        raise ValueError("empty input")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y


def threshold_sweep(scores: Sequence[float], labels: Sequence[int]) -> ThresholdCurve:
    """Accuracy/precision/recall at every distinct score used as tau."""
    s, y = _check_scores_labels(scores, labels)
    n = s.size
    npos = int(y.sum())

    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # positives with score >= s_sorted[i], via suffix sums
    suffix_pos = np.concatenate([np.cumsum(y_sorted[::-1])[::-1], [0]])

    points = []
    i = 0
    while i < n:
        tau = s_sorted[i]
        predicted = n - i           # scores >= tau
        tp = int(suffix_pos[i])
        fp = predicted - tp
        fn = npos - tp
        tn = n - predicted - fn
        accuracy = (tp + tn) / n
        precision = tp / predicted if predicted else 1.0
        recall = tp / npos if npos else 0.0
        points.append(ThresholdPoint(float(tau), accuracy, precision, recall))
        while i < n and s_sorted[i] == tau:
            i += 1
    return ThresholdCurve(points=points)


def select_threshold(
    scores: Sequence[float],
    labels: Sequence[int],
    criterion: str,
    curve: Optional[ThresholdCurve] = None,
) -> float:
    """Pick tau by criterion.

    best_accuracy: max accuracy, ties to the largest tau. best_precision:
    max precision, ties to higher recall then larger tau. mean_positive:
    arithmetic mean of the positive-labeled scores.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    s, y = _check_scores_labels(scores, labels)

    if criterion == "mean_positive":
        pos = s[y == 1]
        if pos.size == 0:
            raise NoPositivesError("mean_positive needs at least one positive label")
        return math.fsum(pos) / pos.size

    if curve is None:
        curve = threshold_sweep(scores, labels)

    if criterion == "best_accuracy":
        best = max(curve.points, key=lambda p: (p.accuracy, p.threshold))
        return best.threshold

    if not np.any(y == 1):
        raise NoPositivesError("best_precision needs at least one positive label")
    best = max(curve.points, key=lambda p: (p.precision, p.recall, p.threshold))
    return best.threshold


def classify_pairs(scores: Sequence[float], tau: float) -> list[int]:
    """Label 1 iff score >= tau (boundary inclusive)."""
    if not math.isfinite(tau):
        raise ValueError("tau must be finite")
    return [1 if float(sc) >= tau else 0 for sc in scores]


def retrieval_metrics(
    top1: Sequence[Optional[str]],
    gold: Sequence[Iterable[str]],
    accepted: Sequence[bool],
) -> RetrievalEval:
    """First-answer metrics over questions that all have a gold answer.

    A question counts as correct when its top hit was accepted and is in
    its gold set. accuracy@1 divides by all evaluated questions,
    precision@1 by the answered (accepted) ones; recall@1 coincides with
    accuracy@1 under this protocol and is reported for completeness.
    With nothing answered, precision@1 degenerates to 0.0 with answered=0.
    """
    if not (len(top1) == len(gold) == len(accepted)):
        raise ValueError("top1, gold and accepted must be aligned")
    evaluated = len(top1)
    if evaluated == 0:
        return RetrievalEval(0.0, 0.0, 0.0, 0, 0)
    answered = sum(1 for a in accepted if a)
    correct = sum(
        1 for hit, g, acc in zip(top1, gold, accepted)
        if acc and hit is not None and hit in set(g)
    )
    accuracy = correct / evaluated
    precision = correct / answered if answered else 0.0
    return RetrievalEval(accuracy, precision, accuracy, answered, evaluated)

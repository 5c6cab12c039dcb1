"""Multi-label evaluation: per-class average precision and macro mAP.

Average precision sweeps rank thresholds over clips sorted by descending
score (ties broken by ascending clip order) and sums (R_n - R_{n-1}) * P_n
with R_0 = 0 and no interpolation. Classes without a positive label are
excluded from the macro mean and flagged rather than silently scored 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EvaluationError


@dataclass(frozen=True)
class ClassMetrics:
    name: str
    ap: float | None  # None when the class has no positives
    positives: int
    ties: int

    @property
    def excluded(self) -> bool:
        return self.ap is None


@dataclass(frozen=True)
class MetricsReport:
    per_class: tuple[ClassMetrics, ...]
    mean_ap: float

    @property
    def excluded_classes(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.per_class if c.excluded)


def _ranked(scores: np.ndarray, labels: np.ndarray):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must match")
    if scores.size == 0:
        raise EvaluationError("cannot evaluate an empty score list")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary")
    order = np.argsort(-scores, kind="stable")  # stable: ties keep clip order
    return labels[order]


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-threshold sweep AP; raises EvaluationError when no positives."""
    ranked = _ranked(np.asarray(scores), np.asarray(labels))
    positives = ranked.sum()
    if positives == 0:
        raise EvaluationError("average precision undefined: no positive labels")
    tp = np.cumsum(ranked)
    precision = tp / np.arange(1, ranked.size + 1)
    recall = tp / positives
    delta_recall = np.diff(recall, prepend=0.0)
    return float((delta_recall * precision).sum())


def pr_curve(
    scores: Sequence[float], labels: Sequence[int]
) -> list[tuple[float, float]]:
    """(recall, precision) at every rank threshold, same ordering rules."""
    ranked = _ranked(np.asarray(scores), np.asarray(labels))
    positives = ranked.sum()
    if positives == 0:
        raise EvaluationError("PR curve undefined: no positive labels")
    tp = np.cumsum(ranked)
    precision = tp / np.arange(1, ranked.size + 1)
    recall = tp / positives
    return [(float(r), float(p)) for r, p in zip(recall, precision)]


def mean_ap(aps: Sequence[float]) -> float:
    """Unweighted mean over the valid per-class APs."""
    if len(aps) == 0:
        raise EvaluationError("no classes with positive labels to average")
    return float(np.mean(np.asarray(aps, dtype=np.float64)))


def _tie_count(scores: np.ndarray) -> int:
    return int(scores.size - np.unique(scores).size)


def evaluate(
    scores: np.ndarray, labels: np.ndarray, class_names: Sequence[str]
) -> MetricsReport:
    """Per-class AP over a [n_clips, n_classes] score/label pair."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must match")
    if scores.shape[1] != len(class_names):
        raise ValueError("class_names length disagrees with score width")
    per_class = []
    valid = []
    for c, name in enumerate(class_names):
        positives = int(labels[:, c].sum())
        ties = _tie_count(scores[:, c])
        if positives == 0:
            per_class.append(ClassMetrics(name, None, 0, ties))
            continue
        ap = average_precision(scores[:, c], labels[:, c])
        per_class.append(ClassMetrics(name, ap, positives, ties))
        valid.append(ap)
    return MetricsReport(tuple(per_class), mean_ap(valid))


def write_metrics_csv(report: MetricsReport, path: str | Path) -> Path:
    """CSV rows (class, ap, positives, ties) plus a summary mAP row.

    Excluded classes (no positives) carry an empty ap cell; the summary row
    totals positives/ties over the counted classes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "ap", "positives", "ties"])
        for cm in report.per_class:
            writer.writerow(
                [cm.name, "" if cm.ap is None else f"{cm.ap:.10f}", cm.positives, cm.ties]
            )
        total_pos = sum(c.positives for c in report.per_class)
        total_ties = sum(c.ties for c in report.per_class)
        writer.writerow(["mAP", f"{report.mean_ap:.10f}", total_pos, total_ties])
    return path

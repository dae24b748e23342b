"""Binary classification metrics: accuracy, macro F1, and rank-based AUC.

AUC is the Mann-Whitney statistic: the fraction of (positive, negative)
pairs ranked correctly, ties counting one half. Computed from tie-averaged
ranks, which equals the brute-force pairwise count exactly (rank sums are
half-integers, exact in float64). An evaluation set with a single class
has no pairs; its AUC is reported as the sentinel None ("NA" in CSVs),
never 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MetricReport", "compute_metrics", "format_auc"]


@dataclass(frozen=True)
class ClassStats:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    macro_f1: float
    auc: float | None
    per_class: tuple
    n_samples: int


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _ranks_with_ties(scores: np.ndarray) -> np.ndarray:
    """1-based ranks; tied scores all get the mean of their rank range."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def compute_metrics(scores, labels) -> MetricReport:
    """Metrics from positive-class probabilities and 0/1 labels.

    Accuracy and F1 use threshold 0.5 with ties going to class 0 (matching
    argmax prediction on a [0.5, 0.5] posterior); AUC is threshold-free.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if scores.ndim != 1 or scores.shape != labels.shape or len(scores) == 0:
        raise ValueError(
            f"need equal-length nonempty 1-D scores/labels, got {scores.shape}, {labels.shape}"
        )
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")

    pred = (scores > 0.5).astype(int)
    accuracy = float(np.mean(pred == labels))

    per_class = []
    for cls in (0, 1):
        tp = int(np.sum((pred == cls) & (labels == cls)))
        precision = _safe_div(tp, int(np.sum(pred == cls)))
        recall = _safe_div(tp, int(np.sum(labels == cls)))
        f1 = _safe_div(2.0 * precision * recall, precision + recall)
        per_class.append(ClassStats(precision=precision, recall=recall, f1=f1))
    macro_f1 = (per_class[0].f1 + per_class[1].f1) / 2.0

    n_pos = int(np.sum(labels == 1))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        auc = None
    else:
        ranks = _ranks_with_ties(scores)
        u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
        auc = u / (n_pos * n_neg)

    return MetricReport(
        accuracy=accuracy,
        macro_f1=macro_f1,
        auc=auc,
        per_class=tuple(per_class),
        n_samples=len(labels),
    )


def format_auc(auc: float | None) -> str:
    return "NA" if auc is None else repr(auc)

"""Detection metrics: accuracy, ROC AUC, average precision and equal error rate."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateInputError


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    auc: float
    ap: float
    eer: float
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return asdict(self)


def _prepare(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores {s.shape} and labels {y.shape} differ in length")
    if s.size == 0:
        raise DegenerateInputError("empty input")
    return s, y.astype(bool)


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of examples where ``score >= threshold`` matches the label."""
    s, y = _prepare(scores, labels)
    return float(np.mean((s >= threshold) == y))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC from midranks (ties count one half)."""
    s, y = _prepare(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError("AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Step-wise AP; equal scores keep their input order."""
    s, y = _prepare(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DegenerateInputError("AP needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    cum_tp = np.cumsum(hits)
    precision = cum_tp / np.arange(1, y.size + 1)
    return float(precision[hits].sum() / n_pos)


def roc_curve(scores, labels):
    """FPR and TPR of the rule ``score >= t`` for each distinct score, plus t=+inf.

    Points run from (1, 1) at the lowest threshold down to (0, 0).
    """
    s, y = _prepare(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError("ROC needs both classes")
    thresholds = np.unique(s)
    pos_sorted = np.sort(s[y])
    neg_sorted = np.sort(s[~y])
    # counts of scores >= t
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="left")
    fpr = np.append(fp / n_neg, 0.0)
    tpr = np.append(tp / n_pos, 0.0)
    return fpr, tpr, np.append(thresholds, np.inf)


def eer(scores, labels) -> float:
    """Rate where false-positive and false-negative rates cross, interpolated linearly."""
    fpr, tpr, _ = roc_curve(scores, labels)
    fnr = 1.0 - tpr
    diff = fpr - fnr  # starts at 1 (everything positive), ends at -1
    for i in range(diff.size):
        if diff[i] == 0.0:
            return float(fpr[i])
        if diff[i] < 0.0:
            d0, d1 = diff[i - 1], diff[i]
            t = d0 / (d0 - d1)
            return float(fpr[i - 1] + t * (fpr[i] - fpr[i - 1]))
    return float(fpr[-1])  # pragma: no cover - diff always ends at -1


def evaluate_scores(scores, labels, threshold: float = 0.5) -> MetricsReport:
    s, y = _prepare(scores, labels)
    n_pos = int(y.sum())
    return MetricsReport(
        acc=accuracy(s, y, threshold),
        auc=auc(s, y),
        ap=average_precision(s, y),
        eer=eer(s, y),
        n_pos=n_pos,
        n_neg=int(y.size - n_pos),
    )

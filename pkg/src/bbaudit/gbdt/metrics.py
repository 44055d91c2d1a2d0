"""Classifier metrics. The positive class is the unserved / suspicious
prediction (a claim expected to fail a challenge)."""

from __future__ import annotations

import numpy as np

from .trees import GbdtError


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC AUC by rank statistic with tied scores assigned average ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise GbdtError("AUC needs at least one positive and one negative label")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> dict[str, int]:
    """Cells sum to the evaluation-set size; predicted positive means
    score strictly above the threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    pred = scores > threshold
    actual = labels == 1
    return {
        "tp": int(np.sum(pred & actual)),
        "fp": int(np.sum(pred & ~actual)),
        "tn": int(np.sum(~pred & ~actual)),
        "fn": int(np.sum(~pred & actual)),
    }


def precision_recall(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    c = confusion(scores, labels, threshold)
    out = {}
    out["precision_positive"] = c["tp"] / (c["tp"] + c["fp"]) if c["tp"] + c["fp"] else 0.0
    out["recall_positive"] = c["tp"] / (c["tp"] + c["fn"]) if c["tp"] + c["fn"] else 0.0
    out["precision_negative"] = c["tn"] / (c["tn"] + c["fn"]) if c["tn"] + c["fn"] else 0.0
    out["recall_negative"] = c["tn"] / (c["tn"] + c["fp"]) if c["tn"] + c["fp"] else 0.0
    return out


def f1(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    pr = precision_recall(scores, labels, threshold)
    p, r = pr["precision_positive"], pr["recall_positive"]
    return 2.0 * p * r / (p + r) if p + r else 0.0


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) points swept over the distinct scores."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0, float("inf"))]
    tp = fp = 0
    i = 0
    while i < len(order):
        thr = scores[order[i]]
        while i < len(order) and scores[order[i]] == thr:
            if labels[order[i]] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / n_neg if n_neg else 0.0, tp / n_pos if n_pos else 0.0, float(thr)))
    return points

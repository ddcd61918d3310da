"""Evaluation metrics: MAE for ratings, balanced accuracy for labels."""

from __future__ import annotations

import logging

import numpy as np

from .errors import ShapeError

log = logging.getLogger(__name__)

#: label value used for majority-vote rejections; never a valid class
REJECTED = 0


def mae(predictions, truth) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.shape != t.shape:
        raise ShapeError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise ShapeError("empty input")
    return float(np.mean(np.abs(p - t)))


def mse(predictions, truth) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.shape != t.shape:
        raise ShapeError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    return float(np.mean((p - t) ** 2))


def per_class_recall(predictions, truth, n_classes: int) -> np.ndarray:
    """Recall for classes 1..K; NaN for classes absent from ``truth``."""
    p = np.asarray(predictions).ravel()
    t = np.asarray(truth).ravel()
    recall = np.full(n_classes, np.nan)
    for k in range(1, n_classes + 1):
        mask = t == k
        if mask.any():
            recall[k - 1] = np.mean(p[mask] == k)
    return recall


def balanced_accuracy(predictions, truth, n_classes: int) -> float:
    """Mean per-class recall over the classes present in ``truth``.

    Rows predicted as :data:`REJECTED` are dropped before scoring; use
    :func:`count_rejected` to report them.
    """
    p = np.asarray(predictions).ravel()
    t = np.asarray(truth).ravel()
    if p.shape != t.shape:
        raise ShapeError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    keep = p != REJECTED
    p, t = p[keep], t[keep]
    if p.size == 0:
        raise ShapeError("empty input")
    recall = per_class_recall(p, t, n_classes)
    present = ~np.isnan(recall)
    if not present.all():
        missing = [k + 1 for k in np.flatnonzero(~present)]
        log.warning("classes %s absent from truth; averaging over present classes", missing)
    return float(np.mean(recall[present]))


def count_rejected(predictions) -> int:
    return int(np.sum(np.asarray(predictions) == REJECTED))

"""Split-restricted accuracy, micro-F1 and confusion matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import UNLABELED
from .errors import InputError

__all__ = ["ConfusionMatrix", "confusion_matrix", "accuracy", "micro_f1"]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """counts[t, p] = number of evaluated nodes of true class t predicted as p."""
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])


def _select(pred, truth, subset) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.shape != truth.shape:
        raise InputError(f"{pred.size} predictions for {truth.size} labels")
    if subset is not None:
        idx = np.asarray(subset, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= truth.size):
            raise InputError(f"subset holds an index outside [0, {truth.size})")
        pred, truth = pred[idx], truth[idx]
    if truth.size == 0:
        raise InputError("cannot evaluate an empty subset")
    unknown = np.flatnonzero(truth == UNLABELED)
    if unknown.size:
        raise InputError(f"{unknown.size} evaluated node(s) have no true label")
    return pred, truth


def confusion_matrix(pred, truth, num_classes: int | None = None,
                     subset=None) -> ConfusionMatrix:
    pred, truth = _select(pred, truth, subset)
    c = int(max(num_classes or 0, pred.max() + 1, truth.max() + 1))
    counts = np.bincount(truth * c + pred, minlength=c * c).reshape(c, c)
    return ConfusionMatrix(counts=counts)


def accuracy(pred, truth, subset=None) -> float:
    """Exact-match fraction over *subset* (all nodes when None)."""
    pred, truth = _select(pred, truth, subset)
    return float(np.mean(pred == truth))


def micro_f1(pred, truth, subset=None) -> float:
    """Micro-averaged F1 from pooled TP / FP / FN over all classes."""
    cm = confusion_matrix(pred, truth, subset=subset).counts
    tp = np.trace(cm)
    fp = cm.sum(axis=0).sum() - tp
    fn = cm.sum(axis=1).sum() - tp
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2 * precision * recall / (precision + recall))

"""Precision, recall, F2 and the attack-ratio estimate."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError


@dataclass(frozen=True)
class Evaluation:
    precision: float
    recall: float
    f2: float
    estimated_ratio: float
    true_ratio: float
    tp: int
    fp: int
    fn: int

    def to_dict(self) -> dict:
        return asdict(self)


def f_beta(precision: float, recall: float, beta: float = 2.0) -> float:
    b2 = beta * beta
    den = b2 * precision + recall
    return 0.0 if den == 0 else (1 + b2) * precision * recall / den


def confusion_f2(tp: int, fp: int, fn: int) -> float:
    """F2 from counts; 1.0 when there is nothing to find and nothing was flagged."""
    if tp + fp + fn == 0:
        return 1.0
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return f_beta(p, r)


def evaluate(predictions, truth) -> Evaluation:
    """Per-device scores; the estimated ratio is the share of devices predicted poisoned."""
    yhat = np.asarray(predictions).astype(np.int64)
    y = np.asarray(truth).astype(np.int64)
    if yhat.shape != y.shape or yhat.ndim != 1:
        raise ConfigurationError("predictions and truth must be equal-length label vectors")
    tp = int(((yhat == 1) & (y == 1)).sum())
    fp = int(((yhat == 1) & (y == 0)).sum())
    fn = int(((yhat == 0) & (y == 1)).sum())
    p = tp / (tp + fp) if tp + fp else (1.0 if fn == 0 else 0.0)
    r = tp / (tp + fn) if tp + fn else 1.0
    n = max(len(y), 1)
    return Evaluation(p, r, confusion_f2(tp, fp, fn), float(yhat.sum()) / n, float(y.sum()) / n, tp, fp, fn)

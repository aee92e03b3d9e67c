"""Window the feature matrices, train on early windows and vote on late ones."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError, InsufficientDataError
from .features import BiasFeatureSpec, Reference, mine_features, raw_features, stack_features
from .forest import ForestModel, ForestParams, train_forest
from .metrics import Evaluation, evaluate


@dataclass(frozen=True)
class IdentificationResult:
    predictions: np.ndarray
    window_predictions: np.ndarray
    evaluation: Evaluation
    model: ForestModel
    train_windows: int
    test_windows: int


def window_bounds(T: int, ell: int, warmup: int = 0) -> list[tuple[int, int]]:
    """Non-overlapping ``[start, start + ell)`` windows after ``warmup`` steps."""
    if ell < 1:
        raise ConfigurationError("window length must be >= 1")
    return [(s, s + ell) for s in range(warmup, T - ell + 1, ell)]


def split_windows(windows: Sequence, train_fraction: float = 0.7) -> tuple[list, list]:
    """Temporal split: the earliest ``train_fraction`` of windows train, the rest test."""
    if not 0 < train_fraction < 1:
        raise ConfigurationError("train_fraction must lie in (0, 1)")
    w = list(windows)
    if len(w) < 2:
        raise InsufficientDataError("need at least two windows for a train/test split")
    cut = min(max(1, int(round(train_fraction * len(w)))), len(w) - 1)
    return w[:cut], w[cut:]


def feature_block(reports: np.ndarray, kind, fe: bool, spec: BiasFeatureSpec, reference: Reference,
                  device_ids: Sequence | None = None) -> np.ndarray:
    """``(n, kinds, T)`` FE-enhanced features, or ``(n, 1, T)`` raw deviations when ``fe`` is off."""
    if not fe:
        return raw_features(reports, kind).values[:, None, :]
    mats = mine_features(reports, kind, spec, reference, device_ids)
    return np.stack([m.values for m in mats.values()], axis=1)


def windows_to_rows(block: np.ndarray, windows: Sequence[tuple[int, int]]) -> np.ndarray:
    """``(len(windows) * n, kinds * ell)`` rows, window-major."""
    return np.vstack([block[:, :, a:b].reshape(block.shape[0], -1) for a, b in windows])


def identify(reports: np.ndarray, kind, labels, reference: Reference, ell: int = 12,
             spec: BiasFeatureSpec = BiasFeatureSpec(), params: ForestParams = ForestParams(),
             fe: bool = True, train_fraction: float = 0.7, device_ids: Sequence | None = None,
             warmup: int = 0, block: np.ndarray | None = None) -> IdentificationResult:
    """Train on labelled early windows of ``reports`` and label each device from the later ones.

    A device is predicted poisoned when more than half of its test windows are
    (ties go to clean).  ``block`` is a precomputed :func:`feature_block` for
    the same arguments.
    """
    y = np.asarray(labels).astype(np.int64)
    n, T = np.asarray(reports).shape
    if y.shape != (n,):
        raise ConfigurationError("one label per device is required")
    if block is None:
        block = feature_block(reports, kind, fe, spec, reference, device_ids)
    elif block.shape[0] != n or block.shape[2] != T:
        raise ConfigurationError("precomputed feature block does not match the reports")
    train_w, test_w = split_windows(window_bounds(T, ell, warmup), train_fraction)
    model = train_forest(windows_to_rows(block, train_w), np.tile(y, len(train_w)), params)
    per_window = model.predict(windows_to_rows(block, test_w)).reshape(len(test_w), n)
    pred = (2 * per_window.sum(axis=0) > len(test_w)).astype(np.int64)
    return IdentificationResult(pred, per_window, evaluate(pred, y), model, len(train_w), len(test_w))

"""Stability tracking over deviation series and the dual-dimension hypothesis test."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigurationError, InsufficientDataError

METRIC_NAMES = ("variance", "range", "autocorrelation")


class Verdict(str, enum.Enum):
    H0 = "H0"
    H1 = "H1"


def lag1_autocorrelation(x) -> float:
    """``sum (x_t - mu)(x_{t+1} - mu) / sum (x_t - mu)^2``; 0 for a constant series."""
    x = np.asarray(x, dtype=np.float64)
    d = x - x.mean()
    den = float(d @ d)
    if den <= 1e-300 or den <= 1e-24 * float(x @ x):
        return 0.0
    return float(d[:-1] @ d[1:]) / den


def stability_metrics(series) -> np.ndarray:
    """``(variance, range, |lag-1 autocorrelation|)`` of one deviation sequence."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise InsufficientDataError("stability metrics need a sequence of length >= 2")
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("deviation sequence contains non-finite values")
    return np.array([float(x.var()), float(x.max() - x.min()), abs(lag1_autocorrelation(x))])


def batch_stability_metrics(windows: np.ndarray) -> np.ndarray:
    """Metrics for each row of ``(W, L)``; returns ``(W, 3)``."""
    w = np.asarray(windows, dtype=np.float64)
    d = w - w.mean(axis=1, keepdims=True)
    den = (d * d).sum(axis=1)
    num = (d[:, :-1] * d[:, 1:]).sum(axis=1)
    flat = (den <= 1e-300) | (den <= 1e-24 * (w * w).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        ac = np.where(flat, 0.0, num / np.where(flat, 1.0, den))
    return np.column_stack([w.var(axis=1), w.max(axis=1) - w.min(axis=1), np.abs(ac)])


@dataclass(frozen=True, eq=False)
class Thresholds:
    """Per-metric thresholds; ``shared`` holds for both dimensions unless a per-dimension pair is set."""

    similarity: np.ndarray
    correlation: np.ndarray

    @classmethod
    def shared(cls, theta) -> "Thresholds":
        t = np.asarray(theta, dtype=np.float64)
        return cls(t, t)

    def __post_init__(self):
        for name in ("similarity", "correlation"):
            t = np.asarray(getattr(self, name), dtype=np.float64)
            if t.shape != (3,):
                raise ConfigurationError("thresholds need exactly three values")
            object.__setattr__(self, name, t)

    def to_dict(self) -> dict:
        return {"similarity": self.similarity.tolist(), "correlation": self.correlation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Thresholds":
        return cls(np.asarray(d["similarity"]), np.asarray(d["correlation"]))


@dataclass(frozen=True, eq=False)
class StabilityVerdict:
    metrics_s: np.ndarray
    metrics_c: np.ndarray
    thresholds: Thresholds
    decision: Verdict

    @property
    def flagged(self) -> bool:
        return self.decision is Verdict.H1


def stability_decision(m_s, m_c, theta) -> StabilityVerdict:
    """H1 iff some metric i breaches its threshold in both dimensions at once."""
    th = theta if isinstance(theta, Thresholds) else Thresholds.shared(theta)
    ms = np.asarray(m_s, dtype=np.float64)
    mc = np.asarray(m_c, dtype=np.float64)
    breach = (ms > th.similarity) & (mc > th.correlation)
    return StabilityVerdict(ms, mc, th, Verdict.H1 if bool(np.any(breach)) else Verdict.H0)


def quantile_thresholds(metrics: np.ndarray, q: float, min_windows: int = 20) -> np.ndarray:
    m = np.asarray(metrics, dtype=np.float64).reshape(-1, 3)
    if m.shape[0] < min_windows:
        raise InsufficientDataError(f"threshold calibration needs >= {min_windows} benign windows, got {m.shape[0]}")
    if not 0 < q < 1:
        raise ConfigurationError("quantile q must lie in (0, 1)")
    return np.quantile(m, q, axis=0)


def calibrate_thresholds(benign_s: Sequence, benign_c: Sequence | None = None, q: float = 0.99,
                         mode: str = "shared", min_windows: int = 20) -> Thresholds:
    """Thresholds as the ``q``-quantile (linear interpolation) of benign window metrics.

    ``benign_s`` / ``benign_c`` are ``(W, 3)`` metric arrays.  ``mode="shared"``
    pools both dimensions into one triple; ``"per-dimension"`` calibrates each
    dimension on its own windows.  Passing only ``benign_s`` calibrates one
    shared triple from those windows.
    """
    ms = np.asarray(benign_s, dtype=np.float64).reshape(-1, 3)
    if benign_c is None:
        return Thresholds.shared(quantile_thresholds(ms, q, min_windows))
    mc = np.asarray(benign_c, dtype=np.float64).reshape(-1, 3)
    if mode == "shared":
        if min(len(ms), len(mc)) < min_windows:
            raise InsufficientDataError(f"threshold calibration needs >= {min_windows} benign windows")
        return Thresholds.shared(quantile_thresholds(np.vstack([ms, mc]), q, min_windows))
    if mode == "per-dimension":
        return Thresholds(quantile_thresholds(ms, q, min_windows), quantile_thresholds(mc, q, min_windows))
    raise ConfigurationError(f"unknown threshold mode {mode!r}")


def window_starts(length: int, span: int, stride: int) -> np.ndarray:
    if length < span:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, length - span + 1, stride)


def windowed_metrics(series, span: int, stride: int) -> np.ndarray:
    """Metrics for windows ``series[s : s + span]`` at the given stride; ``(W, 3)``."""
    x = np.asarray(series, dtype=np.float64)
    starts = window_starts(len(x), span, stride)
    if starts.size == 0:
        return np.zeros((0, 3))
    idx = starts[:, None] + np.arange(span)[None, :]
    return batch_stability_metrics(x[idx])

"""Temporal similarity detector: historical SQR envelope widened by the LDP tolerance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dataset import Continuous, HistoryStore
from ..errors import ConfigurationError, InsufficientDataError
from ..ldp import LdpConfig, SqrValue, sqr_series, tolerance


@dataclass(frozen=True, eq=False)
class AttributeInterval:
    """Componentwise interval ``[lower, upper]``; one component for a mean SQR, K for a frequency SQR."""

    lower: np.ndarray
    upper: np.ndarray
    alpha: float

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ConfigurationError("interval bounds must satisfy lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(), "alpha": self.alpha}


@dataclass(frozen=True)
class SimilarityBaseline:
    intervals: tuple[AttributeInterval, ...]

    def __getitem__(self, j: int) -> AttributeInterval:
        return self.intervals[j]

    @classmethod
    def from_sqrs(cls, sqrs: Sequence, alpha: float) -> "SimilarityBaseline":
        """Single-attribute baseline straight from historical SQR values."""
        return cls((interval_from_sqrs(sqrs, alpha),))


def interval_from_sqrs(sqrs, alpha: float | np.ndarray) -> AttributeInterval:
    """``[min Q - alpha, max Q + alpha]`` over the historical SQRs (componentwise)."""
    arr = np.asarray(sqrs, dtype=np.float64)
    if arr.size == 0:
        raise InsufficientDataError("similarity baseline needs at least one historical SQR")
    if arr.ndim == 1:
        arr = arr[:, None]
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a < 0):
        raise ConfigurationError("alpha must be >= 0")
    return AttributeInterval(arr.min(axis=0) - a, arr.max(axis=0) + a, float(np.max(a)))


def build_similarity_baseline(hist: HistoryStore, configs: Sequence[LdpConfig],
                              frequency_slack: str = "split") -> SimilarityBaseline:
    """Per-attribute envelopes from the raw (true) SQRs of every historical time instance.

    The tolerance uses ``n`` = the number of reporting devices.  For frequency
    SQRs ``alpha`` bounds an L1 norm; ``frequency_slack="split"`` spreads it as
    ``alpha / K`` per category, ``"full"`` widens every category by ``alpha``.
    """
    if frequency_slack not in ("split", "full"):
        raise ConfigurationError(f"unknown frequency_slack {frequency_slack!r}")
    if len(configs) != len(hist.kinds):
        raise ConfigurationError("need one LdpConfig per attribute")
    intervals = []
    for j, cfg in enumerate(configs):
        series = [sqr_series(ds.values[:, j, :], cfg, perturbed=False) for ds in hist.raw]
        n = hist.raw[0].n
        alpha = tolerance(n, cfg).alpha
        stacked = np.concatenate(series, axis=0)
        if isinstance(cfg.domain, Continuous):
            intervals.append(interval_from_sqrs(stacked, alpha))
        else:
            per = alpha / cfg.domain.size if frequency_slack == "split" else alpha
            iv = interval_from_sqrs(stacked, per)
            intervals.append(AttributeInterval(iv.lower, iv.upper, alpha))
    return SimilarityBaseline(tuple(intervals))


def interval_distance(values, interval: AttributeInterval) -> np.ndarray:
    """L1 distance from each SQR (last axis = components) to the interval."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.shape[-1] != interval.lower.size:
        raise ConfigurationError("SQR and interval have different numbers of components")
    below = np.maximum(interval.lower - v, 0.0)
    above = np.maximum(v - interval.upper, 0.0)
    return (below + above).sum(axis=-1)


def similarity_deviation(sqr: SqrValue | float | np.ndarray, baseline: SimilarityBaseline, attr: int = 0) -> float:
    """Lambda_S of one SQR value: 0 inside the envelope, otherwise its L1 distance."""
    v = sqr.as_array() if hasattr(sqr, "as_array") else np.atleast_1d(np.asarray(sqr, dtype=np.float64))
    return float(interval_distance(v, baseline[attr]))


def similarity_series(sqrs: np.ndarray, baseline: SimilarityBaseline, attr: int) -> np.ndarray:
    """Lambda_S over a series: ``(T,)`` means or ``(T, K)`` frequencies."""
    arr = np.asarray(sqrs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return interval_distance(arr, baseline[attr])

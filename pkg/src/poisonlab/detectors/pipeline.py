"""The combined attribute-level detector: similarity + correlation + stability."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..dataset import HistoryStore, Provenance, TimeSeriesDataset
from ..errors import ConfigurationError, InsufficientDataError
from ..ldp import LdpConfig, default_configs, perturb_dataset, sqr_series, tolerance
from .correlation import CorrelationBaseline, build_correlation_baseline, correlation_series
from .similarity import SimilarityBaseline, build_similarity_baseline, similarity_series
from .stability import (
    METRIC_NAMES,
    Thresholds,
    Verdict,
    calibrate_thresholds,
    stability_decision,
    windowed_metrics,
)


@dataclass(frozen=True)
class DetectorConfig:
    """Detector parameters.

    ``calibration_fraction`` of the history is held out from the baselines and
    re-perturbed ``calibration_replicas`` times to produce benign deviation
    windows.  Monitoring windows hold ``ell + 1`` deviation points and advance
    by ``window_stride`` (default: non-overlapping).
    """

    ell: int = 12
    B: int = 200
    delta: float = 0.95
    lam: float = 0.1
    q: float = 0.99
    weight: str = "sqrt-variance"
    threshold_mode: str = "shared"
    frequency_slack: str = "split"
    calibration_fraction: float = 1 / 3
    calibration_replicas: int = 6
    window_stride: int | None = None
    pair_selection: str = "all"
    seed: int = 0

    def __post_init__(self):
        if self.ell < 3:
            raise ConfigurationError("window length ell must be >= 3")
        if not 0 < self.q < 1:
            raise ConfigurationError("quantile q must lie in (0, 1)")
        if not 0 < self.calibration_fraction < 1:
            raise ConfigurationError("calibration_fraction must lie in (0, 1)")
        if self.calibration_replicas < 1:
            raise ConfigurationError("calibration_replicas must be >= 1")
        if self.threshold_mode not in ("shared", "per-dimension"):
            raise ConfigurationError(f"unknown threshold_mode {self.threshold_mode!r}")

    @property
    def span(self) -> int:
        return self.ell + 1

    @property
    def stride(self) -> int:
        return self.window_stride or self.span


@dataclass(eq=False)
class AttributeReport:
    name: str
    alpha: float
    lambda_s: np.ndarray
    lambda_c: np.ndarray
    delta_rho: np.ndarray
    excluded_pairs: int
    metrics_s: np.ndarray
    metrics_c: np.ndarray
    thresholds: Thresholds
    verdicts: list
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "alpha": self.alpha,
            "lambda_s": [float(v) for v in self.lambda_s],
            "lambda_c": [float(v) for v in self.lambda_c],
            "metrics_s": self.metrics_s.tolist(),
            "metrics_c": self.metrics_c.tolist(),
            "metric_names": list(METRIC_NAMES),
            "thresholds": self.thresholds.to_dict(),
            "verdict": [v.value for v in self.verdicts],
            "excluded_pairs": int(self.excluded_pairs),
            "flagged": bool(self.flagged),
        }


@dataclass(eq=False)
class DetectionReport:
    attributes: list
    argmax_attribute: int | None

    @property
    def flagged(self) -> list[int]:
        return [j for j, a in enumerate(self.attributes) if a.flagged]

    def to_dict(self) -> dict:
        return {
            "attributes": {a.name: a.to_dict() for a in self.attributes},
            "flagged": [self.attributes[j].name for j in self.flagged],
            "argmax_attribute": None if self.argmax_attribute is None else self.attributes[self.argmax_attribute].name,
        }


class Detector:
    """Fit on clean raw history, then score perturbed monitoring data."""

    def __init__(self, config: DetectorConfig, ldp: Sequence[LdpConfig]):
        self.config = config
        self.ldp = list(ldp)
        self.similarity: SimilarityBaseline | None = None
        self.correlation: CorrelationBaseline | None = None
        self.thresholds: list[Thresholds] | None = None
        self.names: tuple[str, ...] = ()
        self.kinds: tuple = ()
        self.n = 0

    # -- fitting -------------------------------------------------------
    def fit(self, history: TimeSeriesDataset | HistoryStore) -> "Detector":
        store = history if isinstance(history, HistoryStore) else HistoryStore((history,))
        raw = store.raw[0] if len(store.raw) == 1 else _concat_time(store.raw)
        cfg = self.config
        if len(self.ldp) != raw.k:
            raise ConfigurationError("need one LdpConfig per attribute")
        T = raw.T
        t_cal = int(round(T * (1 - cfg.calibration_fraction)))
        if t_cal < cfg.ell or T - t_cal < cfg.ell + cfg.span:
            raise InsufficientDataError(f"history of length {T} too short for ell={cfg.ell}")
        base, cal = raw.slice_time(0, t_cal), raw.slice_time(t_cal, T)
        self.names, self.kinds, self.n = raw.names, raw.kinds, raw.n
        ss = np.random.SeedSequence([cfg.seed, 0x5EED])
        base_seed, boot_seed, cal_seed = ss.spawn(3)
        self.similarity = build_similarity_baseline(HistoryStore((base,)), self.ldp, cfg.frequency_slack)
        base_pert = perturb_dataset(base, self.ldp, np.random.default_rng(base_seed))
        self.correlation = build_correlation_baseline(
            self._series(base_pert), raw.kinds, ell=cfg.ell, B=cfg.B, delta=cfg.delta, lam=cfg.lam,
            rng=np.random.default_rng(boot_seed), weight=cfg.weight, selection=cfg.pair_selection,
        )
        ms = [[] for _ in range(raw.k)]
        mc = [[] for _ in range(raw.k)]
        for child in cal_seed.spawn(cfg.calibration_replicas):
            pert = perturb_dataset(cal, self.ldp, np.random.default_rng(child))
            lam_s, lam_c, _, _ = self._deviations(pert)
            for j in range(raw.k):
                ms[j].append(windowed_metrics(lam_s[j], cfg.span, 1))
                mc[j].append(windowed_metrics(lam_c[j], cfg.span, 1))
        self.thresholds = [
            calibrate_thresholds(np.vstack(ms[j]), np.vstack(mc[j]), cfg.q, cfg.threshold_mode)
            for j in range(raw.k)
        ]
        return self

    def _series(self, ds: TimeSeriesDataset) -> list[np.ndarray]:
        return [sqr_series(ds.values[:, j, :], self.ldp[j], perturbed=True) for j in range(ds.k)]

    def _deviations(self, ds: TimeSeriesDataset, cache: dict | None = None, recompute: Sequence[int] = ()):
        """Aligned Lambda_S and Lambda_C for every trailing window end ``tau >= ell - 1``."""
        series = self._series(ds)
        ell = self.config.ell
        lam_s = np.stack([similarity_series(series[j], self.similarity, j)[ell - 1:] for j in range(ds.k)])
        lam_c, drho, excl = correlation_series(series, self.kinds, self.correlation, cache, recompute)
        return lam_s, lam_c, drho, excl

    # -- scoring -------------------------------------------------------
    def score(self, ds: TimeSeriesDataset, cache: dict | None = None, recompute: Sequence[int] = ()) -> DetectionReport:
        if self.thresholds is None:
            raise ConfigurationError("detector is not fitted")
        if ds.names != self.names or ds.kinds != self.kinds:
            raise ConfigurationError("monitored dataset does not match the fitted attributes")
        if ds.T < self.config.ell + self.config.span - 1:
            raise InsufficientDataError("monitoring period shorter than one window")
        cfg = self.config
        lam_s, lam_c, drho, excl = self._deviations(ds, cache, recompute)
        attrs = []
        for j in range(ds.k):
            m_s = windowed_metrics(lam_s[j], cfg.span, cfg.stride)
            m_c = windowed_metrics(lam_c[j], cfg.span, cfg.stride)
            verdicts = [stability_decision(a, b, self.thresholds[j]).decision for a, b in zip(m_s, m_c)]
            attrs.append(AttributeReport(
                name=ds.names[j],
                alpha=tolerance(ds.n, self.ldp[j]).alpha,
                lambda_s=lam_s[j], lambda_c=lam_c[j], delta_rho=drho[j],
                excluded_pairs=int(excl[j].max()) if excl[j].size else 0,
                metrics_s=m_s, metrics_c=m_c, thresholds=self.thresholds[j],
                verdicts=verdicts, flagged=any(v is Verdict.H1 for v in verdicts),
            ))
        mean_c = lam_c.mean(axis=1)
        argmax = int(np.argmax(mean_c)) if np.all(np.isfinite(mean_c)) else None
        return DetectionReport(attrs, argmax)

    # -- persistence ---------------------------------------------------
    def thresholds_dict(self) -> dict:
        return {name: th.to_dict() for name, th in zip(self.names, self.thresholds or [])}

    def save_thresholds(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.thresholds_dict(), fh, sort_keys=True, indent=1)

    def load_thresholds(self, path) -> None:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        self.thresholds = [Thresholds.from_dict(d[name]) for name in self.names]


def _concat_time(datasets: Sequence[TimeSeriesDataset]) -> TimeSeriesDataset:
    first = datasets[0]
    values = np.concatenate([d.values for d in datasets], axis=2)
    times = tuple(f"{i}:{t}" for i, d in enumerate(datasets) for t in d.times)
    return TimeSeriesDataset(first.names, first.kinds, values, first.lineage, first.device_ids, times)

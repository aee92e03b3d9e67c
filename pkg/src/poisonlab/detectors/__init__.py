"""Attribute-level detectors: temporal similarity, attribute correlation and stability tracking."""

from .correlation import (
    CorrelationBaseline,
    Estimator,
    build_correlation_baseline,
    correlation_deviation,
    sparse_cca,
    sparse_cca_cov,
    weighted_pearson,
)
from .pipeline import DetectionReport, Detector, DetectorConfig
from .similarity import SimilarityBaseline, build_similarity_baseline, similarity_deviation
from .stability import Thresholds, Verdict, calibrate_thresholds, stability_decision, stability_metrics

__all__ = [
    "CorrelationBaseline", "Estimator", "build_correlation_baseline", "correlation_deviation",
    "sparse_cca", "sparse_cca_cov", "weighted_pearson", "DetectionReport", "Detector",
    "DetectorConfig", "SimilarityBaseline", "build_similarity_baseline", "similarity_deviation",
    "Thresholds", "Verdict", "calibrate_thresholds", "stability_decision", "stability_metrics",
]

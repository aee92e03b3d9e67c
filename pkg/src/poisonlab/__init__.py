"""Simulation and detection of data poisoning against locally differentially private telemetry."""

from .attacks import AttackConfig, AttackMode, AttackTrace, apply_dipa, apply_drpa, apply_ropa, poisoned_pipeline
from .dataset import Continuous, Discrete, HistoryStore, Provenance, TimeSeriesDataset, generate_synthetic, weather_like_spec
from .detectors import DetectionReport, Detector, DetectorConfig
from .errors import (
    ConfigurationError,
    ConstraintViolation,
    InsufficientDataError,
    MissingDataError,
    ParseError,
    PoisonLabError,
)
from .identify import BiasFeatureSpec, ForestParams, evaluate, identify, mine_features, train_forest
from .ldp import LdpConfig, Mechanism, default_configs, perturb_dataset, tolerance

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackMode", "AttackTrace", "apply_dipa", "apply_drpa", "apply_ropa", "poisoned_pipeline",
    "Continuous", "Discrete", "HistoryStore", "Provenance", "TimeSeriesDataset", "generate_synthetic",
    "weather_like_spec", "DetectionReport", "Detector", "DetectorConfig", "ConfigurationError",
    "ConstraintViolation", "InsufficientDataError", "MissingDataError", "ParseError", "PoisonLabError",
    "BiasFeatureSpec", "ForestParams", "evaluate", "identify", "mine_features", "train_forest",
    "LdpConfig", "Mechanism", "default_configs", "perturb_dataset", "tolerance",
]

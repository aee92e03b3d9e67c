from .features import (
    ALL_KINDS,
    BiasFeatureMatrix,
    BiasFeatureSpec,
    FeatureKind,
    Reference,
    mine_features,
    raw_features,
    stack_features,
)
from .forest import ForestModel, ForestParams, Tree, predict, train_forest
from .metrics import Evaluation, confusion_f2, evaluate, f_beta
from .pipeline import IdentificationResult, feature_block, identify, split_windows, window_bounds

__all__ = [
    "ALL_KINDS", "BiasFeatureMatrix", "BiasFeatureSpec", "FeatureKind", "Reference", "mine_features",
    "raw_features", "stack_features", "ForestModel", "ForestParams", "Tree", "predict", "train_forest",
    "Evaluation", "confusion_f2", "evaluate", "f_beta", "IdentificationResult", "feature_block", "identify",
    "split_windows", "window_bounds",
]

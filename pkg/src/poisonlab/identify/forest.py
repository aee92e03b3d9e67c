"""Random-forest device classifier.

Trees are grown with scikit-learn's CART learner on bootstrap samples; the
fitted split arrays are copied out so prediction, voting and persistence do
not depend on the library.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.tree import DecisionTreeClassifier

from ..errors import ConfigurationError

MODEL_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    trees: int = 100
    max_depth: int = 8
    max_features: str | float = "sqrt"
    bootstrap: bool = True
    sample_fraction: float = 1.0
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.trees < 1:
            raise ConfigurationError("tree count must be >= 1")
        if self.max_depth < 1:
            raise ConfigurationError("max_depth must be >= 1")
        if not 0 < self.sample_fraction <= 1:
            raise ConfigurationError("sample_fraction must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat binary tree: ``feature < 0`` marks a leaf whose class is ``value``."""

    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            go_left = X[rows[inner], f[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    def to_dict(self) -> dict:
        return {
            "left": self.left.tolist(), "right": self.right.tolist(), "feature": self.feature.tolist(),
            "threshold": [float(x) for x in self.threshold], "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.asarray(d["left"], np.int64), np.asarray(d["right"], np.int64),
                   np.asarray(d["feature"], np.int64), np.asarray(d["threshold"], np.float64),
                   np.asarray(d["value"], np.int64))

    @classmethod
    def from_sklearn(cls, est: DecisionTreeClassifier) -> "Tree":
        t = est.tree_
        classes = est.classes_.astype(np.int64)
        value = classes[np.argmax(t.value[:, 0, :], axis=1)]
        feature = np.where(t.children_left < 0, -1, t.feature).astype(np.int64)
        return cls(t.children_left.astype(np.int64), t.children_right.astype(np.int64), feature,
                   t.threshold.astype(np.float64), value)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[Tree, ...]
    width: int
    params: ForestParams
    meta: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        """Majority vote over trees; ties go to 0 (clean)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.width:
            raise ConfigurationError(f"feature width {X.shape[-1] if X.ndim else 0} does not match trained width {self.width}")
        votes = np.zeros(X.shape[0], dtype=np.int64)
        for tree in self.trees:
            votes += tree.predict(X)
        return (2 * votes > len(self.trees)).astype(np.int64)

    def vote_share(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return sum(t.predict(X) for t in self.trees) / len(self.trees)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "version": MODEL_VERSION,
            "width": self.width,
            "params": {"trees": p.trees, "max_depth": p.max_depth, "max_features": p.max_features,
                       "bootstrap": p.bootstrap, "sample_fraction": p.sample_fraction,
                       "min_samples_leaf": p.min_samples_leaf, "seed": p.seed},
            "meta": self.meta,
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def model_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("version") != MODEL_VERSION:
            raise ConfigurationError(f"unsupported model version {d.get('version')!r}")
        return cls(tuple(Tree.from_dict(t) for t in d["trees"]), int(d["width"]),
                   ForestParams(**d["params"]), d.get("meta", {}))

    @classmethod
    def load(cls, path) -> "ForestModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_forest(X, y, params: ForestParams = ForestParams()) -> ForestModel:
    """Fit ``params.trees`` CART trees (Gini) on bootstrap samples with per-tree seeds."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ConfigurationError("need a 2-D feature matrix and one label per row")
    if not np.all(np.isfinite(X)):
        raise ConfigurationError("features contain non-finite values")
    if np.unique(y).size < 2:
        raise ConfigurationError("training labels contain a single class; need both poisoned and clean rows")
    seeds = np.random.SeedSequence(params.seed).generate_state(params.trees, dtype=np.uint32)
    N = X.shape[0]
    m = max(1, int(round(params.sample_fraction * N)))
    trees = []
    for s in seeds:
        rng = np.random.default_rng(int(s))
        rows = rng.integers(0, N, size=m) if params.bootstrap else rng.permutation(N)[:m]
        est = DecisionTreeClassifier(criterion="gini", max_depth=params.max_depth,
                                     max_features=params.max_features,
                                     min_samples_leaf=params.min_samples_leaf, random_state=int(s))
        est.fit(X[rows], y[rows])
        trees.append(Tree.from_sklearn(est))
    return ForestModel(tuple(trees), X.shape[1], params)


def predict(model: ForestModel, X) -> np.ndarray:
    return model.predict(X)

"""Experiment configuration: a YAML mapping whose keys are the dataclass field names."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np
import yaml

from ..attacks import AttackMode
from ..detectors import DetectorConfig
from ..errors import ConfigurationError
from ..identify import BiasFeatureSpec, ForestParams
from ..ldp import Mechanism

OUTPUT_ENV = "POISONLAB_OUTPUT_DIR"


def default_ratios() -> tuple[float, ...]:
    return tuple(round(0.01 * i, 2) for i in range(51))


@dataclass(frozen=True)
class DatasetConfig:
    """``source`` is ``"synthetic"`` (weather-like generator) or ``"csv"``.

    Synthetic data spans ``history + monitor`` steps; the first ``history``
    steps fit the detector and the identification reference.  A CSV must hold
    at least ``history + monitor`` time steps.
    """

    source: str = "synthetic"
    path: str | None = None
    n: int = 56
    history: int = 288
    monitor: int = 288
    discrete: tuple[int, ...] = (6, 7, 8, 9)

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigurationError(f"unknown dataset source {self.source!r}")
        if self.source == "csv" and not self.path:
            raise ConfigurationError("csv dataset needs a path")
        if self.n < 2 or self.history < 1 or self.monitor < 1:
            raise ConfigurationError("dataset sizes must be positive (n >= 2)")


@dataclass(frozen=True)
class LdpSettings:
    """Nominal budget and confidence; ``overrides`` maps attribute name to ``{epsilon, mechanism}``."""

    epsilon: float = 1.0
    delta: float = 0.95
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ConfigurationError("epsilon must be a positive finite number")
        if not 0 <= self.delta < 1:
            raise ConfigurationError("delta must lie in [0, 1)")
        for name, o in self.overrides.items():
            if not isinstance(o, dict) or set(o) - {"epsilon", "mechanism"}:
                raise ConfigurationError(f"bad LDP override for {name!r}")
            if "mechanism" in o:
                Mechanism(o["mechanism"])


@dataclass(frozen=True)
class AttackGrid:
    """Modes x ratios x targets; ``params`` holds per-mode AttackConfig fields.

    ``params`` may nest a ``continuous`` / ``discrete`` mapping to give
    different values by target kind.
    """

    modes: tuple[str, ...] = ("dipa", "drpa", "ropa")
    ratios: tuple[float, ...] = field(default_factory=default_ratios)
    targets: tuple[Any, ...] = (0,)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for m in self.modes:
            AttackMode(m)
        for r in self.ratios:
            if not 0 <= r <= 0.5:
                raise ConfigurationError(f"attack ratio {r} outside [0, 0.5]")
        if not self.modes or not self.ratios or not self.targets:
            raise ConfigurationError("attack grid needs at least one mode, ratio and target")
        for m in self.params:
            AttackMode(m)

    def mode_params(self, mode: str, continuous: bool) -> dict:
        p = dict(self.params.get(mode, {}) or {})
        nested = p.pop("continuous" if continuous else "discrete", None) or {}
        p.pop("discrete" if continuous else "continuous", None)
        p.update(nested)
        return p


@dataclass(frozen=True)
class IdentificationSettings:
    """``attribute``: ``"target"`` mines the attacked attribute, ``"flagged"`` the detector's pick,
    ``"none"`` skips identification (detection-only grids)."""

    ell: int = 12
    train_fraction: float = 0.7
    fe: bool = True
    attribute: str = "target"
    compare_baseline: bool = False

    def __post_init__(self):
        if self.ell < 1:
            raise ConfigurationError("identification window must be >= 1")
        if self.attribute not in ("target", "flagged", "none"):
            raise ConfigurationError(f"unknown identification attribute rule {self.attribute!r}")


@dataclass(frozen=True)
class SweepSettings:
    epsilons: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    window_lengths: tuple[int, ...] = (1, 2, 3, 4, 6, 8, 12)
    ratio: float = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    dataset: DatasetConfig = DatasetConfig()
    ldp: LdpSettings = LdpSettings()
    attack: AttackGrid = AttackGrid()
    detector: DetectorConfig = DetectorConfig()
    miner: BiasFeatureSpec = BiasFeatureSpec()
    classifier: ForestParams = ForestParams()
    identification: IdentificationSettings = IdentificationSettings()
    sweep: SweepSettings = SweepSettings()
    seeds: int = 10
    output_dir: str = "artifacts"
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        if self.seeds < 1:
            raise ConfigurationError("seeds must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


_SECTIONS = {
    "dataset": DatasetConfig, "ldp": LdpSettings, "attack": AttackGrid, "detector": DetectorConfig,
    "miner": BiasFeatureSpec, "classifier": ForestParams, "identification": IdentificationSettings,
    "sweep": SweepSettings,
}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if hasattr(x, "value") and isinstance(x, str):
        return x.value
    if isinstance(x, np.generic):
        return x.item()
    return x


def _build(cls, data: dict, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"section {where!r} must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(f"unknown keys in {where!r}: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kw)
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping")
    if "seed" not in data:
        raise ConfigurationError("config needs a global 'seed'")
    top = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - top
    if unknown:
        raise ConfigurationError(f"unknown top-level keys: {sorted(unknown)}")
    kw = {}
    for key, value in data.items():
        kw[key] = _build(_SECTIONS[key], value, key) if key in _SECTIONS else value
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path, output_dir: str | None = None) -> ExperimentConfig:
    """Read a YAML config; ``$POISONLAB_OUTPUT_DIR`` (or ``output_dir``) overrides the output directory."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    cfg = config_from_dict(data)
    out = output_dir or os.environ.get(OUTPUT_ENV)
    return cfg.replace(output_dir=out) if out else cfg

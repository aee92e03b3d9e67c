"""Multi-device, multi-attribute time-series datasets and the synthetic generator.

Values are stored as a float64 array of shape ``(n, k, T)``: device, attribute,
time.  Discrete attributes hold category indices (integral floats).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Continuous:
    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigurationError(f"continuous domain bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise ConfigurationError(f"continuous domain needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def size(self) -> float:
        """Width of the domain, used as the Laplace sensitivity."""
        return self.hi - self.lo

    def contains(self, values: np.ndarray) -> np.ndarray:
        return (values >= self.lo) & (values <= self.hi)


@dataclass(frozen=True)
class Discrete:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ConfigurationError("discrete attribute needs at least 2 categories")
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"duplicate category labels in {labels}")

    @classmethod
    def of_size(cls, size: int) -> "Discrete":
        return cls(tuple(str(i) for i in range(size)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def contains(self, values: np.ndarray) -> np.ndarray:
        return (values >= 0) & (values < self.size) & (np.floor(values) == values)


AttributeKind = Union[Continuous, Discrete]


def is_continuous(kind: AttributeKind) -> bool:
    return isinstance(kind, Continuous)


class Provenance(str, enum.Enum):
    RAW = "raw"
    POISONED = "poisoned"
    PERTURBED = "perturbed"


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Readings ``values[i, j, t]`` of device i, attribute j at time t.

    ``lineage`` records the processing stages in order, always starting with
    RAW; stages are only ever appended.
    """

    names: tuple[str, ...]
    kinds: tuple[AttributeKind, ...]
    values: np.ndarray
    lineage: tuple[Provenance, ...] = (Provenance.RAW,)
    device_ids: tuple[str, ...] | None = None
    times: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 3:
            raise ConfigurationError(f"values must be (n, k, T), got shape {values.shape}")
        n, k, T = values.shape
        if n < 1 or k < 1 or T < 1:
            raise ConfigurationError(f"empty dataset shape {values.shape}")
        names = tuple(self.names)
        kinds = tuple(self.kinds)
        if len(names) != k or len(kinds) != k:
            raise ConfigurationError("names/kinds length must match the attribute axis")
        if len(set(names)) != k:
            raise ConfigurationError(f"duplicate attribute names {names}")
        lineage = tuple(Provenance(p) for p in self.lineage)
        if not lineage or lineage[0] is not Provenance.RAW or Provenance.RAW in lineage[1:]:
            raise ConfigurationError(f"lineage must start with raw and never return to it: {lineage}")
        device_ids = tuple(str(d) for d in self.device_ids) if self.device_ids is not None else tuple(str(i) for i in range(n))
        times = tuple(str(t) for t in self.times) if self.times is not None else tuple(str(t) for t in range(T))
        if len(device_ids) != n or len(set(device_ids)) != n:
            raise ConfigurationError("device_ids must be unique and match the device axis")
        if len(times) != T or len(set(times)) != T:
            raise ConfigurationError("times must be unique and match the time axis")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("dataset contains non-finite values")
        perturbed = Provenance.PERTURBED in lineage
        for j, kind in enumerate(kinds):
            col = values[:, j, :]
            if isinstance(kind, Discrete):
                if not np.all(kind.contains(col)):
                    raise ConfigurationError(f"attribute {names[j]!r} holds invalid category indices")
            elif not perturbed and not np.all(kind.contains(col)):
                # Laplace outputs are deliberately unclamped, so only pre-LDP data is range-checked.
                raise ConfigurationError(f"attribute {names[j]!r} has values outside [{kind.lo}, {kind.hi}]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "lineage", lineage)
        object.__setattr__(self, "device_ids", device_ids)
        object.__setattr__(self, "times", times)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def T(self) -> int:
        return self.values.shape[2]

    @property
    def provenance(self) -> Provenance:
        return self.lineage[-1]

    def index(self, attribute: int | str) -> int:
        if isinstance(attribute, str):
            return self.names.index(attribute)
        if not 0 <= attribute < self.k:
            raise IndexError(f"attribute index {attribute} out of range")
        return int(attribute)

    def with_values(self, values: np.ndarray, stage: Provenance | None = None) -> "TimeSeriesDataset":
        lineage = self.lineage if stage is None else self.lineage + (stage,)
        return TimeSeriesDataset(self.names, self.kinds, values, lineage, self.device_ids, self.times)

    def slice_time(self, start: int, stop: int) -> "TimeSeriesDataset":
        return TimeSeriesDataset(
            self.names, self.kinds, self.values[:, :, start:stop], self.lineage,
            self.device_ids, self.times[start:stop],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeriesDataset):
            return NotImplemented
        return (
            self.names == other.names
            and self.kinds == other.kinds
            and self.lineage == other.lineage
            and self.device_ids == other.device_ids
            and self.times == other.times
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class HistoryStore:
    """Clean history used to build detector baselines.

    ``raw`` holds unpoisoned raw datasets; ``perturbed`` holds their clean LDP
    outputs.  Nothing that went through an attack may enter the store.
    """

    raw: tuple[TimeSeriesDataset, ...]
    perturbed: tuple[TimeSeriesDataset, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "raw", tuple(self.raw))
        object.__setattr__(self, "perturbed", tuple(self.perturbed))
        if not self.raw:
            raise ConfigurationError("history store needs at least one raw dataset")
        for ds in self.raw + self.perturbed:
            if Provenance.POISONED in ds.lineage:
                raise ConfigurationError("poisoned data cannot enter the history store")
        for ds in self.raw:
            if ds.lineage != (Provenance.RAW,):
                raise ConfigurationError("raw history entries must have raw provenance")

    @property
    def kinds(self) -> tuple[AttributeKind, ...]:
        return self.raw[0].kinds

    @property
    def names(self) -> tuple[str, ...]:
        return self.raw[0].names


# --------------------------------------------------------------------------
# synthetic generator


@dataclass(frozen=True)
class AttributeSpec:
    """One generated attribute.

    Continuous readings are ``level + scale * z + trend ramp + seasonal + noise``
    clipped to ``[lo, hi]`` where ``z`` is the shared-latent signal.  Discrete
    readings follow a sticky Markov chain whose fresh draws quantize ``z``.
    """

    name: str
    kind: str = "continuous"
    lo: float = -1.0
    hi: float = 1.0
    categories: int = 4
    level: float = 0.0
    scale: float = 0.4
    trend: float = 0.0
    seasonal_amplitude: float = 0.0
    seasonal_period: float = 24.0
    noise: float = 0.0
    stickiness: float = 0.3

    def attribute_kind(self) -> AttributeKind:
        if self.kind == "continuous":
            return Continuous(float(self.lo), float(self.hi))
        if self.kind == "discrete":
            return Discrete.of_size(int(self.categories))
        raise ConfigurationError(f"unknown attribute kind {self.kind!r}")


@dataclass(frozen=True)
class GeneratorSpec:
    """Shape plus per-attribute signal parameters for :func:`generate_synthetic`.

    ``correlations`` lists ``(attr_a, attr_b, rho)`` with attribute names or
    indices.  The latent signal mixes a shared temporal factor, a per-device
    offset and white noise with the given variance shares.  The temporal factor
    is itself an AR(1) process plus a ``seasonal_share`` of a sine with a random
    phase; all components are mixed by the same Cholesky factor, so the pooled
    correlation of two latents equals the requested coefficient.
    """

    n: int
    T: int
    attributes: tuple[AttributeSpec, ...]
    correlations: tuple[tuple[Union[int, str], Union[int, str], float], ...] = ()
    temporal_share: float = 0.6
    device_share: float = 0.1
    ar_coef: float = 0.9
    seasonal_share: float = 0.0
    seasonal_period: float = 72.0

    @property
    def k(self) -> int:
        return len(self.attributes)

    def validate(self) -> None:
        if self.n < 1 or self.T < 1 or self.k < 1:
            raise ConfigurationError(f"need n, k, T >= 1, got {self.n}, {self.k}, {self.T}")
        floats = [self.temporal_share, self.device_share, self.ar_coef, self.seasonal_share, self.seasonal_period]
        for a in self.attributes:
            a.attribute_kind()
            floats += [a.level, a.scale, a.trend, a.seasonal_amplitude, a.seasonal_period, a.noise, a.stickiness]
        if not all(math.isfinite(float(x)) for x in floats):
            raise ConfigurationError("generator parameters must be finite")
        if self.temporal_share < 0 or self.device_share < 0 or self.temporal_share + self.device_share > 1:
            raise ConfigurationError("temporal_share + device_share must lie in [0, 1]")
        if not -1 < self.ar_coef < 1:
            raise ConfigurationError("ar_coef must lie in (-1, 1)")
        if not 0 <= self.seasonal_share <= 1 or self.seasonal_period <= 0:
            raise ConfigurationError("seasonal_share must lie in [0, 1] and seasonal_period be > 0")
        for a in self.attributes:
            if a.scale < 0 or a.noise < 0 or not 0 <= a.stickiness < 1 or a.seasonal_period <= 0:
                raise ConfigurationError(f"invalid signal parameters for attribute {a.name!r}")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate attribute names")
        for a, b, rho in self.correlations:
            if not math.isfinite(rho) or abs(rho) >= 1:
                raise ConfigurationError(f"requested correlation {rho} must satisfy |rho| < 1")
            if self._resolve(a) == self._resolve(b):
                raise ConfigurationError("a correlation pair must name two distinct attributes")
        if self.k >= 2 and not self.correlations:
            raise ConfigurationError("at least one correlation pair is required when k >= 2")

    def _resolve(self, ref: Union[int, str]) -> int:
        if isinstance(ref, str):
            names = [a.name for a in self.attributes]
            if ref not in names:
                raise ConfigurationError(f"unknown attribute {ref!r} in correlations")
            return names.index(ref)
        if not 0 <= int(ref) < self.k:
            raise ConfigurationError(f"attribute index {ref} out of range")
        return int(ref)

    def correlation_matrix(self) -> np.ndarray:
        R = np.eye(self.k)
        for a, b, rho in self.correlations:
            i, j = self._resolve(a), self._resolve(b)
            R[i, j] = R[j, i] = rho
        return R


def _nearest_correlation(R: np.ndarray) -> np.ndarray:
    # Eigenvalue clipping keeps an inconsistent set of requested pairs usable.
    w, V = np.linalg.eigh(R)
    if w.min() > 1e-8:
        return R
    w = np.clip(w, 1e-6, None)
    C = (V * w) @ V.T
    d = np.sqrt(np.diag(C))
    return C / np.outer(d, d)


def generate_synthetic(spec: GeneratorSpec, seed: int) -> TimeSeriesDataset:
    """Generate a raw dataset; a pure function of ``(spec, seed)``."""
    spec.validate()
    rng = np.random.default_rng(seed)
    n, k, T = spec.n, spec.k, spec.T
    L = np.linalg.cholesky(_nearest_correlation(spec.correlation_matrix()))

    # Independent standardized factors, one per attribute, then mixed by L.
    phi = spec.ar_coef
    innov = rng.standard_normal((k, T))
    ar = np.empty((k, T))
    ar[:, 0] = innov[:, 0]
    for t in range(1, T):
        ar[:, t] = phi * ar[:, t - 1] + math.sqrt(1 - phi * phi) * innov[:, t]
    phases = rng.uniform(0.0, 2 * math.pi, size=(k, 1))
    season = math.sqrt(2.0) * np.sin(2 * math.pi * np.arange(T) / spec.seasonal_period + phases)
    temporal = math.sqrt(1 - spec.seasonal_share) * ar + math.sqrt(spec.seasonal_share) * season
    device = rng.standard_normal((k, n))
    white = rng.standard_normal((k, n, T))
    ws, wd = spec.temporal_share, spec.device_share
    wn = max(0.0, 1.0 - ws - wd)
    factors = (
        math.sqrt(ws) * temporal[:, None, :]
        + math.sqrt(wd) * device[:, :, None]
        + math.sqrt(wn) * white
    )
    z = np.einsum("jf,fnt->njt", L, factors)

    t_axis = np.arange(T, dtype=np.float64)
    ramp = t_axis / (T - 1) - 0.5 if T > 1 else np.zeros(1)
    values = np.empty((n, k, T))
    extra = rng.standard_normal((n, k, T))
    stay = rng.random((n, k, T))
    for j, a in enumerate(spec.attributes):
        kind = a.attribute_kind()
        phase = 2 * math.pi * j / max(k, 1)
        deterministic = a.trend * ramp + a.seasonal_amplitude * np.sin(2 * math.pi * t_axis / a.seasonal_period + phase)
        if isinstance(kind, Continuous):
            x = a.level + a.scale * z[:, j, :] + deterministic[None, :] + a.noise * extra[:, j, :]
            values[:, j, :] = np.clip(x, kind.lo, kind.hi)
        else:
            K = kind.size
            # Quantize the latent (shifted by level/trend/seasonality) at standard-normal quantiles.
            cuts = _normal_quantiles(K)
            latent = z[:, j, :] + a.level + deterministic[None, :] + a.noise * extra[:, j, :]
            fresh = np.searchsorted(cuts, latent)
            chain = np.empty((n, T))
            chain[:, 0] = fresh[:, 0]
            for t in range(1, T):
                keep = stay[:, j, t] < a.stickiness
                chain[:, t] = np.where(keep, chain[:, t - 1], fresh[:, t])
            values[:, j, :] = chain
    kinds = tuple(a.attribute_kind() for a in spec.attributes)
    names = tuple(a.name for a in spec.attributes)
    return TimeSeriesDataset(names, kinds, values)


def _normal_quantiles(K: int) -> np.ndarray:
    from scipy.stats import norm

    return norm.ppf(np.arange(1, K) / K)


def weather_like_spec(n: int = 56, T: int = 288, discrete: Sequence[int] = (6, 7, 8, 9)) -> GeneratorSpec:
    """Ten weather-style attributes on ``[-1, 1]`` with a handful of correlated pairs.

    ``discrete`` selects which attribute slots are categorical.
    """
    names = [
        "temperature", "feels_like", "humidity", "pressure", "wind_speed", "visibility",
        "condition", "wind_direction", "uv_band", "cloud_band",
    ]
    sizes = {6: 4, 7: 4, 8: 3, 9: 4}
    attrs = []
    for j, name in enumerate(names):
        if j in discrete:
            attrs.append(AttributeSpec(name, "discrete", categories=sizes.get(j, 4), stickiness=0.3))
        else:
            attrs.append(AttributeSpec(name, "continuous", level=0.1 * ((j % 3) - 1), scale=0.6))
    correlations = (
        ("temperature", "feels_like", 0.85),
        ("temperature", "uv_band", 0.4),
        ("humidity", "visibility", -0.6),
        ("humidity", "condition", 0.6),
        ("condition", "cloud_band", 0.6),
        ("pressure", "wind_speed", -0.5),
        ("wind_speed", "wind_direction", 0.5),
    )
    return GeneratorSpec(
        n=n, T=T, attributes=tuple(attrs), correlations=correlations,
        temporal_share=0.85, device_share=0.05, ar_coef=0.5, seasonal_share=0.3, seasonal_period=72.0,
    )

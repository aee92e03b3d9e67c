"""Local differential privacy mechanisms, estimators and tolerance bounds.

Laplace noise uses scale ``b = |X| / eps`` with ``|X| = hi - lo`` and is never
clamped.  GRR keeps the true category with probability
``p = e^eps / (e^eps + K - 1)``.

All sampling goes through :func:`open_uniform` followed by a deterministic
transform, so two runs that consume the same uniforms but use different
budgets produce coupled outputs.  The attack module relies on this.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .dataset import AttributeKind, Continuous, Discrete, Provenance, TimeSeriesDataset
from .errors import ConfigurationError, InsufficientDataError


class Mechanism(str, enum.Enum):
    LAPLACE = "laplace"
    GRR = "grr"


@dataclass(frozen=True)
class LdpConfig:
    mechanism: Mechanism
    epsilon: float
    domain: AttributeKind
    delta: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        eps = float(self.epsilon)
        if math.isnan(eps) or eps <= 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        object.__setattr__(self, "epsilon", eps)
        if not (0.0 <= self.delta < 1.0):
            raise ConfigurationError(f"delta must lie in [0, 1), got {self.delta}")
        if self.mechanism is Mechanism.LAPLACE and not isinstance(self.domain, Continuous):
            raise ConfigurationError("Laplace mechanism requires a continuous domain")
        if self.mechanism is Mechanism.GRR and not isinstance(self.domain, Discrete):
            raise ConfigurationError("GRR mechanism requires a discrete domain")

    @classmethod
    def for_kind(cls, kind: AttributeKind, epsilon: float = 1.0, delta: float = 0.95) -> "LdpConfig":
        mech = Mechanism.LAPLACE if isinstance(kind, Continuous) else Mechanism.GRR
        return cls(mech, epsilon, kind, delta)

    @property
    def domain_size(self) -> float:
        return self.domain.size

    def with_epsilon(self, epsilon: float) -> "LdpConfig":
        return LdpConfig(self.mechanism, epsilon, self.domain, self.delta)


@dataclass(frozen=True)
class Mean:
    value: float

    def as_array(self) -> np.ndarray:
        return np.array([self.value])


@dataclass(frozen=True, eq=False)
class Frequency:
    histogram: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.histogram, dtype=np.float64).copy()
        h.setflags(write=False)
        object.__setattr__(self, "histogram", h)

    def as_array(self) -> np.ndarray:
        return self.histogram

    def __eq__(self, other):
        return isinstance(other, Frequency) and np.array_equal(self.histogram, other.histogram)


SqrValue = Union[Mean, Frequency]


@dataclass(frozen=True)
class ToleranceBound:
    alpha: float
    delta: float
    mechanism: Mechanism


# --------------------------------------------------------------------------
# sampling primitives

_TWO53 = float(2**53)


def open_uniform(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniforms strictly inside (0, 1) on a 2^-53 grid."""
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) / _TWO53


def laplace_from_uniform(u, scale) -> np.ndarray:
    """Inverse-CDF transform of uniforms to Laplace(0, scale) noise."""
    c = np.asarray(u, dtype=np.float64) - 0.5
    return -np.asarray(scale, dtype=np.float64) * np.sign(c) * np.log1p(-2.0 * np.abs(c))


def grr_probabilities(epsilon, size: int) -> tuple[np.ndarray, np.ndarray]:
    """``(p, q)`` of the GRR channel; stable for large and infinite epsilon."""
    if size < 2:
        raise ConfigurationError(f"GRR needs at least 2 categories, got {size}")
    eps = np.asarray(epsilon, dtype=np.float64)
    if np.any(~(eps > 0)):
        raise ConfigurationError("epsilon must be > 0")
    decay = np.exp(-eps)
    p = 1.0 / (1.0 + (size - 1) * decay)
    q = decay / (1.0 + (size - 1) * decay)
    return p, q


def grr_from_uniforms(categories, u1, u2, epsilon, size: int) -> np.ndarray:
    """Keep the category when ``u1 < p``; otherwise pick one of the K-1 others by ``u2``."""
    cats = np.asarray(categories, dtype=np.int64)
    p, _ = grr_probabilities(epsilon, size)
    other = np.minimum(np.floor(np.asarray(u2) * (size - 1)).astype(np.int64), size - 2)
    other = other + (other >= cats)
    return np.where(np.asarray(u1) < p, cats, other)


def _check_epsilon(epsilon) -> np.ndarray:
    eps = np.asarray(epsilon, dtype=np.float64)
    if np.any(~(eps > 0)):
        raise ConfigurationError("epsilon must be > 0")
    return eps


def laplace_perturb(value, cfg: LdpConfig, rng: np.random.Generator, epsilon=None, bias=0.0):
    """Report ``value + Lap(0, |X|/eps) + bias``; scalar in, scalar out.

    ``epsilon`` overrides the nominal budget (per element when an array).
    """
    if cfg.mechanism is not Mechanism.LAPLACE:
        raise ConfigurationError("laplace_perturb requires a Laplace config")
    v = np.asarray(value, dtype=np.float64)
    eps = _check_epsilon(cfg.epsilon if epsilon is None else epsilon)
    if not np.all(cfg.domain.contains(v)):
        raise ConfigurationError("value outside the attribute domain")
    out = v + laplace_from_uniform(open_uniform(rng, v.shape), cfg.domain_size / eps) + bias
    return float(out) if out.ndim == 0 else out


def grr_perturb(category, cfg: LdpConfig, rng: np.random.Generator, epsilon=None):
    if cfg.mechanism is not Mechanism.GRR:
        raise ConfigurationError("grr_perturb requires a GRR config")
    K = cfg.domain.size
    c = np.asarray(category)
    if np.any((c < 0) | (c >= K)):
        raise ConfigurationError("category index out of range")
    eps = _check_epsilon(cfg.epsilon if epsilon is None else epsilon)
    u1 = open_uniform(rng, c.shape)
    u2 = open_uniform(rng, c.shape)
    out = grr_from_uniforms(c, u1, u2, eps, K)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class UniformDraws:
    """Pre-drawn uniforms for one perturbation pass: ``u1[j]`` and, for GRR, ``u2[j]``."""

    u1: tuple[np.ndarray, ...]
    u2: tuple[np.ndarray | None, ...]


def draw_uniforms(shape: tuple[int, int], configs: Sequence[LdpConfig], rng: np.random.Generator) -> UniformDraws:
    """Draw, attribute by attribute, one ``(n, T)`` block (Laplace) or two (GRR)."""
    u1, u2 = [], []
    for cfg in configs:
        u1.append(open_uniform(rng, shape))
        u2.append(open_uniform(rng, shape) if cfg.mechanism is Mechanism.GRR else None)
    return UniformDraws(tuple(u1), tuple(u2))


def perturb_block(values: np.ndarray, cfg: LdpConfig, u1: np.ndarray, u2: np.ndarray | None,
                  epsilon=None, bias=None) -> np.ndarray:
    """Deterministic map from pre-drawn uniforms to the reports of one ``(n, T)`` block."""
    values = np.asarray(values, dtype=np.float64)
    eps = _check_epsilon(cfg.epsilon if epsilon is None else epsilon)
    if cfg.mechanism is Mechanism.LAPLACE:
        out = values + laplace_from_uniform(u1, cfg.domain_size / eps)
        if bias is not None:
            out = out + bias
        return out
    if bias is not None and np.any(np.asarray(bias) != 0):
        raise ConfigurationError("a location bias is only defined for the Laplace mechanism")
    return grr_from_uniforms(values.astype(np.int64), u1, u2, eps, cfg.domain.size).astype(np.float64)


def perturb_attribute(values: np.ndarray, cfg: LdpConfig, rng: np.random.Generator,
                      epsilon=None, bias=None) -> np.ndarray:
    """Perturb an ``(n, T)`` block of one attribute."""
    values = np.asarray(values, dtype=np.float64)
    draws = draw_uniforms(values.shape, [cfg], rng)
    return perturb_block(values, cfg, draws.u1[0], draws.u2[0], epsilon, bias)


def check_configs(ds: TimeSeriesDataset, configs: Sequence[LdpConfig]) -> None:
    if len(configs) != ds.k:
        raise ConfigurationError("need one LdpConfig per attribute")
    for j, cfg in enumerate(configs):
        if cfg.domain != ds.kinds[j]:
            raise ConfigurationError(f"config domain does not match attribute {ds.names[j]!r}")


def perturb_with_uniforms(ds: TimeSeriesDataset, configs: Sequence[LdpConfig], draws: UniformDraws,
                          epsilons: dict[int, np.ndarray] | None = None,
                          biases: dict[int, np.ndarray] | None = None) -> TimeSeriesDataset:
    check_configs(ds, configs)
    epsilons = epsilons or {}
    biases = biases or {}
    out = np.empty_like(ds.values)
    for j, cfg in enumerate(configs):
        out[:, j, :] = perturb_block(ds.values[:, j, :], cfg, draws.u1[j], draws.u2[j],
                                     epsilons.get(j), biases.get(j))
    return ds.with_values(out, Provenance.PERTURBED)


def perturb_dataset(ds: TimeSeriesDataset, configs: Sequence[LdpConfig], rng: np.random.Generator,
                    epsilons: dict[int, np.ndarray] | None = None,
                    biases: dict[int, np.ndarray] | None = None) -> TimeSeriesDataset:
    """Perturb every attribute in order; returns a dataset with PERTURBED appended.

    ``epsilons[j]`` and ``biases[j]`` are optional ``(n, T)`` (or broadcastable)
    overrides for attribute ``j``.  The uniforms consumed from ``rng`` do not
    depend on the overrides.
    """
    check_configs(ds, configs)
    draws = draw_uniforms((ds.n, ds.T), configs, rng)
    return perturb_with_uniforms(ds, configs, draws, epsilons, biases)


def default_configs(kinds: Sequence[AttributeKind], epsilon: float = 1.0, delta: float = 0.95) -> list[LdpConfig]:
    return [LdpConfig.for_kind(kind, epsilon, delta) for kind in kinds]


# --------------------------------------------------------------------------
# estimators


def estimate_mean(perturbed, cfg: LdpConfig | None = None) -> Mean:
    r = np.asarray(perturbed, dtype=np.float64).ravel()
    if r.size == 0:
        raise InsufficientDataError("estimate_mean needs at least one report")
    return Mean(float(r.mean()))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    # Renormalize to absorb rounding so the sum is 1 to machine precision.
    return w / w.sum()


def observed_frequencies(reports, size: int) -> np.ndarray:
    r = np.asarray(reports).astype(np.int64).ravel()
    if r.size == 0:
        raise InsufficientDataError("frequency estimation needs at least one report")
    return np.bincount(r, minlength=size)[:size] / r.size


def debias_frequencies(observed: np.ndarray, epsilon: float, size: int) -> np.ndarray:
    p, q = grr_probabilities(epsilon, size)
    return project_simplex((np.asarray(observed) - q) / (p - q))


def estimate_frequency(perturbed, cfg: LdpConfig) -> Frequency:
    if cfg.mechanism is not Mechanism.GRR:
        raise ConfigurationError("estimate_frequency requires a GRR config")
    K = cfg.domain.size
    return Frequency(debias_frequencies(observed_frequencies(perturbed, K), cfg.epsilon, K))


def estimate_sqr(reports, cfg: LdpConfig) -> SqrValue:
    if cfg.mechanism is Mechanism.LAPLACE:
        return estimate_mean(reports, cfg)
    return estimate_frequency(reports, cfg)


def true_sqr(values, kind: AttributeKind) -> SqrValue:
    """SQR of unperturbed readings: plain mean or empirical histogram."""
    if isinstance(kind, Continuous):
        return estimate_mean(values)
    return Frequency(observed_frequencies(values, kind.size))


def sqr_series(block: np.ndarray, cfg: LdpConfig, perturbed: bool = True) -> np.ndarray:
    """Per-time SQRs of an ``(n, T)`` block.

    Returns shape ``(T,)`` for means and ``(T, K)`` for frequencies.  With
    ``perturbed=False`` frequencies are the raw empirical histograms.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.shape[0] == 0:
        raise InsufficientDataError("SQR needs at least one device")
    if cfg.mechanism is Mechanism.LAPLACE:
        return block.mean(axis=0)
    K = cfg.domain.size
    n, T = block.shape
    idx = block.astype(np.int64)
    counts = np.zeros((T, K))
    np.add.at(counts, (np.broadcast_to(np.arange(T), (n, T)), idx), 1.0)
    freq = counts / n
    if not perturbed:
        return freq
    p, q = grr_probabilities(cfg.epsilon, K)
    raw = (freq - q) / (p - q)
    return np.stack([project_simplex(row) for row in raw])


# --------------------------------------------------------------------------
# tolerance


def _check_tolerance_args(n: int, cfg: LdpConfig) -> None:
    if n < 1:
        raise InsufficientDataError(f"n must be >= 1, got {n}")
    if not 0 <= cfg.delta < 1:
        raise ConfigurationError(f"delta must lie in [0, 1), got {cfg.delta}")


def tolerance_laplace(n: int, cfg: LdpConfig) -> ToleranceBound:
    """alpha = sqrt(2)|X| / (eps sqrt(n (1 - delta)))."""
    _check_tolerance_args(n, cfg)
    alpha = math.sqrt(2.0) * cfg.domain_size / (cfg.epsilon * math.sqrt(n * (1.0 - cfg.delta)))
    return ToleranceBound(alpha, cfg.delta, Mechanism.LAPLACE)


def tolerance_grr(n: int, cfg: LdpConfig) -> ToleranceBound:
    """alpha = 2(e^eps + |X| - 2) / ((e^eps - 1) sqrt(pi n (1 - delta)))."""
    _check_tolerance_args(n, cfg)
    K = cfg.domain.size
    eps = cfg.epsilon
    if math.isinf(eps):
        ratio = 1.0
    else:
        # (e^eps + K - 2) / (e^eps - 1) written to avoid overflow at large eps.
        ratio = (1.0 + (K - 2) * math.exp(-eps)) / -math.expm1(-eps)
    alpha = 2.0 * ratio / math.sqrt(math.pi * n * (1.0 - cfg.delta))
    return ToleranceBound(alpha, cfg.delta, Mechanism.GRR)


def tolerance(n: int, cfg: LdpConfig) -> ToleranceBound:
    if cfg.mechanism is Mechanism.LAPLACE:
        return tolerance_laplace(n, cfg)
    return tolerance_grr(n, cfg)

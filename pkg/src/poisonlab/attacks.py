"""Poisoning attacks at the three pipeline stages.

* DIPA rewrites raw readings before perturbation, staying inside the valid range.
* DRPA swaps the perturbation rule: random per-device budgets that sum to
  ``|M| * eps`` and an optional location bias.
* ROPA resamples perturbed outputs from an exponential-decay law around the
  legitimate output plus an attacker drift.

Attacker randomness comes from ``AttackConfig.seed`` so the LDP noise stream of
the victim pipeline is untouched; clean and poisoned pipelines run on the same
uniforms and are therefore directly comparable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataset import Continuous, Discrete, Provenance, TimeSeriesDataset
from .errors import ConfigurationError, ConstraintViolation
from .ldp import (
    LdpConfig,
    Mechanism,
    default_configs,
    draw_uniforms,
    open_uniform,
    perturb_with_uniforms,
    sqr_series,
)


class AttackMode(str, enum.Enum):
    DIPA = "dipa"
    DRPA = "drpa"
    ROPA = "ropa"


@dataclass(frozen=True)
class AttackConfig:
    """Attack parameters.

    Mode-specific fields are ignored by the other modes.

    DIPA: ``shift`` is added to raw readings (category indices for discrete
    attributes); ``None`` means the maximum allowable deviation, i.e. every
    poisoned reading lands on the upper end of ``valid_range``.
    DRPA: ``budget_rule`` is ``"random"`` (symmetric Dirichlet), ``"equal"`` or
    ``"fixed"`` (``budgets``); ``min_budget`` is a floor taken out of the total
    before the random split; ``bias`` shifts poisoned Laplace reports.
    ROPA: ``sensitivity`` is the decay scale ``Delta f`` (default: domain size
    for continuous, 1 for discrete); the per-time drift shared by all poisoned
    devices is uniform on ``[drift_low, drift_high]``.  The continuous candidate
    grid has ``grid_points`` equispaced values over the attribute domain widened
    by ``grid_margin`` Laplace scales on each side and by the drift range.
    """

    mode: AttackMode
    target: int
    poisoned: tuple[int, ...] = ()
    seed: int = 0
    gamma: float | None = None
    eta: float | None = None
    # DIPA
    shift: float | None = None
    valid_range: tuple[float, float] | None = None
    clamp: bool = True
    # DRPA
    budget_rule: str = "random"
    budgets: tuple[float, ...] | None = None
    resample_budgets: bool = True
    min_budget: float = 0.0
    bias: float = 0.0
    # ROPA
    sensitivity: float | None = None
    drift_low: float = 0.0
    drift_high: float = 0.0
    grid_points: int = 101
    grid_margin: float = 0.0
    candidates: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", AttackMode(self.mode))
        poisoned = tuple(sorted(int(i) for i in self.poisoned))
        if len(set(poisoned)) != len(poisoned):
            raise ConfigurationError("poisoned device set contains duplicates")
        object.__setattr__(self, "poisoned", poisoned)
        for name in ("gamma", "eta"):
            v = getattr(self, name)
            if v is not None and not (v >= 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be a finite nonnegative cap")
        if self.budget_rule not in ("random", "equal", "fixed"):
            raise ConfigurationError(f"unknown budget rule {self.budget_rule!r}")
        if self.sensitivity is not None and not self.sensitivity > 0:
            raise ConfigurationError("ROPA sensitivity must be > 0")
        if self.drift_low > self.drift_high:
            raise ConfigurationError("drift_low must not exceed drift_high")
        if self.grid_points < 1:
            raise ConfigurationError("grid_points must be >= 1")
        if self.min_budget < 0:
            raise ConfigurationError("min_budget must be >= 0")

    def ratio(self, n: int) -> float:
        return len(self.poisoned) / n

    def validate_for(self, ds: TimeSeriesDataset) -> None:
        if not 0 <= self.target < ds.k:
            raise ConfigurationError(f"target attribute {self.target} out of range")
        if any(i < 0 or i >= ds.n for i in self.poisoned):
            raise ConfigurationError("poisoned device index out of range")


@dataclass(frozen=True, eq=False)
class AttackTrace:
    """Ground truth of one attack on the target attribute.

    ``pattern[i, t]`` is the poisoned minus the clean pipeline output (category
    index difference for discrete attributes).  ``budgets`` holds the DRPA
    per-device budgets, shape ``(n, T)``.
    """

    mode: AttackMode
    target: int
    labels: np.ndarray
    pattern: np.ndarray
    budgets: np.ndarray | None = None

    @property
    def magnitude_sup(self) -> float:
        """Realized max_t ||P^t||_inf."""
        return float(np.max(np.abs(self.pattern))) if self.pattern.size else 0.0

    @property
    def variation_sup(self) -> float:
        """Realized max_t ||P^t - P^{t-1}||_inf with P^{-1} = 0."""
        if self.pattern.size == 0:
            return 0.0
        padded = np.concatenate([np.zeros((self.pattern.shape[0], 1)), self.pattern], axis=1)
        return float(np.max(np.abs(np.diff(padded, axis=1))))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# mode: {self.mode.value}\n# target: {self.target}\n")
            fh.write("device,label\n")
            for i, y in enumerate(self.labels):
                fh.write(f"{i},{int(y)}\n")


def choose_poisoned(n: int, ratio: float, rng: np.random.Generator) -> tuple[int, ...]:
    """Pick ``ceil(ratio * n)`` devices uniformly without replacement (the realized ratio is never below ``ratio``)."""
    if not 0 <= ratio <= 1:
        raise ConfigurationError(f"attack ratio must lie in [0, 1], got {ratio}")
    m = min(n, math.ceil(ratio * n - 1e-9))
    return tuple(sorted(int(i) for i in rng.choice(n, size=m, replace=False)))


def _labels(n: int, poisoned: Sequence[int]) -> np.ndarray:
    y = np.zeros(n, dtype=np.int64)
    y[list(poisoned)] = 1
    return y


def cap_pattern(pattern: np.ndarray, gamma: float | None, eta: float | None,
                lower: np.ndarray | None = None, upper: np.ndarray | None = None) -> np.ndarray:
    """Clip ``P^t`` so ``|P^t| <= gamma``, ``|P^t - P^{t-1}| <= eta`` and ``lower <= P^t <= upper``.

    ``lower``/``upper`` are per-entry hard bounds that must bracket 0.  A
    backward pass shrinks them to the values from which the rest of the series
    stays reachable under ``eta``, so the forward clip never has an empty
    interval.
    """
    if gamma is None and eta is None and lower is None and upper is None:
        return pattern
    out = np.array(pattern, dtype=np.float64, copy=True)
    lo = np.full(out.shape, -np.inf) if lower is None else np.array(lower, dtype=np.float64, copy=True)
    hi = np.full(out.shape, np.inf) if upper is None else np.array(upper, dtype=np.float64, copy=True)
    if gamma is not None:
        lo, hi = np.maximum(lo, -gamma), np.minimum(hi, gamma)
    if eta is not None:
        for t in range(out.shape[1] - 2, -1, -1):
            lo[:, t] = np.maximum(lo[:, t], lo[:, t + 1] - eta)
            hi[:, t] = np.minimum(hi[:, t], hi[:, t + 1] + eta)
    prev = np.zeros(out.shape[0])
    for t in range(out.shape[1]):
        a, b = lo[:, t], hi[:, t]
        if eta is not None:
            a, b = np.maximum(a, prev - eta), np.minimum(b, prev + eta)
        p = np.clip(out[:, t], a, b)
        out[:, t] = p
        prev = p
    return out


def _as_configs(ds: TimeSeriesDataset, ldp) -> list[LdpConfig]:
    if isinstance(ldp, LdpConfig):
        return default_configs(ds.kinds, ldp.epsilon, ldp.delta)
    configs = list(ldp)
    if len(configs) != ds.k:
        raise ConfigurationError("need one LdpConfig per attribute")
    return configs


# --------------------------------------------------------------------------
# DIPA


def _valid_range(kind, cfg: AttackConfig) -> tuple[float, float]:
    lo, hi = (kind.lo, kind.hi) if isinstance(kind, Continuous) else (0.0, float(kind.size - 1))
    if cfg.valid_range is None:
        return lo, hi
    vlo, vhi = cfg.valid_range
    if not (lo <= vlo <= vhi <= hi):
        raise ConfigurationError("valid range must lie inside the attribute domain")
    return float(vlo), float(vhi)


def apply_dipa(raw: TimeSeriesDataset, cfg: AttackConfig) -> tuple[TimeSeriesDataset, AttackTrace]:
    """Rewrite raw readings of poisoned devices: ``d -> d + shift`` inside the valid range."""
    cfg.validate_for(raw)
    j = cfg.target
    kind = raw.kinds[j]
    n, T = raw.n, raw.T
    labels = _labels(n, cfg.poisoned)
    pattern = np.zeros((n, T))
    if not cfg.poisoned:
        return raw, AttackTrace(AttackMode.DIPA, j, labels, pattern)
    lo, hi = _valid_range(kind, cfg)
    shift = (hi - lo) if cfg.shift is None else float(cfg.shift)
    if not math.isfinite(shift):
        raise ConfigurationError("DIPA shift must be finite")
    M = list(cfg.poisoned)
    d = raw.values[M, j, :]
    target = d + shift
    if isinstance(kind, Discrete):
        target = np.round(target)
    if cfg.clamp:
        target = np.clip(target, lo, hi)
    elif np.any((target < lo) | (target > hi)):
        raise ConstraintViolation(f"DIPA shift {shift} leaves the valid range [{lo}, {hi}]")
    if isinstance(kind, Continuous) and (cfg.gamma is not None or cfg.eta is not None):
        # Readings inside the valid range can always meet the caps; one outside a narrowed range must jump, and the range wins.
        capped = cap_pattern(target - d, cfg.gamma, cfg.eta, np.minimum(lo - d, 0.0), np.maximum(hi - d, 0.0))
        target = np.clip(d + capped, lo, hi)
    values = np.array(raw.values, copy=True)
    values[M, j, :] = target
    pattern[M, :] = target - d
    return raw.with_values(values, Provenance.POISONED), AttackTrace(AttackMode.DIPA, j, labels, pattern)


# --------------------------------------------------------------------------
# DRPA


def assign_budgets(m: int, total: float, rule: str, rng: np.random.Generator,
                   fixed: Sequence[float] | None = None, min_budget: float = 0.0) -> np.ndarray:
    """Per-device budgets for ``m`` poisoned devices summing to ``total``."""
    if m == 0:
        return np.zeros(0)
    if not (total > 0 and math.isfinite(total)):
        raise ConfigurationError("total budget must be positive and finite")
    if rule == "equal":
        return np.full(m, total / m)
    if rule == "fixed":
        b = np.asarray(fixed if fixed is not None else (), dtype=np.float64)
        if b.shape != (m,):
            raise ConfigurationError(f"fixed budgets must list {m} values")
        if np.any(~(b > 0)):
            raise ConfigurationError("every per-device budget must be > 0")
        if abs(b.sum() - total) > 1e-12 * max(1.0, total):
            raise ConfigurationError(f"fixed budgets sum to {b.sum()}, expected {total}")
        return b
    if m * min_budget >= total:
        raise ConfigurationError("min_budget leaves no budget to split")
    w = rng.dirichlet(np.ones(m))
    b = min_budget + (total - m * min_budget) * w
    if np.any(~(b > 0)):
        raise ConfigurationError("random split produced a non-positive budget")
    return b


def drpa_budgets(n: int, T: int, cfg: AttackConfig, epsilon: float) -> np.ndarray:
    """``(n, T)`` budget array: nominal for clean devices, the split for poisoned ones."""
    M = list(cfg.poisoned)
    m = len(M)
    eps = np.full((n, T), float(epsilon))
    if m == 0:
        return eps
    rng = np.random.default_rng(cfg.seed)
    total = m * epsilon
    if cfg.resample_budgets and cfg.budget_rule == "random":
        cols = [assign_budgets(m, total, "random", rng, min_budget=cfg.min_budget) for _ in range(T)]
        eps[M, :] = np.stack(cols, axis=1)
    else:
        eps[M, :] = assign_budgets(m, total, cfg.budget_rule, rng, cfg.budgets, cfg.min_budget)[:, None]
    return eps


def apply_drpa(raw: TimeSeriesDataset, cfg: AttackConfig, ldp, rng: np.random.Generator
               ) -> tuple[TimeSeriesDataset, AttackTrace]:
    """Perturb ``raw`` with the poisoned rule on the target attribute.

    ``ldp`` is one config per attribute or a single nominal config.  Consumes
    from ``rng`` exactly what the clean :func:`perturb_dataset` would.
    """
    configs = _as_configs(raw, ldp)
    draws = draw_uniforms((raw.n, raw.T), configs, rng)
    clean, poisoned, trace = _drpa_from_draws(raw, cfg, configs, draws)
    return poisoned, trace


def _drpa_from_draws(raw, cfg, configs, draws):
    cfg.validate_for(raw)
    j = cfg.target
    clean = perturb_with_uniforms(raw, configs, draws)
    labels = _labels(raw.n, cfg.poisoned)
    if not cfg.poisoned:
        return clean, clean, AttackTrace(AttackMode.DRPA, j, labels, np.zeros((raw.n, raw.T)),
                                         np.full((raw.n, raw.T), configs[j].epsilon))
    eps = drpa_budgets(raw.n, raw.T, cfg, configs[j].epsilon)
    bias = None
    if cfg.bias != 0.0:
        bias = np.zeros((raw.n, raw.T))
        bias[list(cfg.poisoned), :] = cfg.bias
    poisoned = perturb_with_uniforms(raw, configs, draws, {j: eps}, {j: bias} if bias is not None else None)
    values = np.array(poisoned.values, copy=True)
    pattern = values[:, j, :] - clean.values[:, j, :]
    if isinstance(raw.kinds[j], Continuous) and (cfg.gamma is not None or cfg.eta is not None):
        pattern = cap_pattern(pattern, cfg.gamma, cfg.eta)
        values[:, j, :] = clean.values[:, j, :] + pattern
    lineage = raw.lineage + (Provenance.POISONED, Provenance.PERTURBED)
    out = TimeSeriesDataset(raw.names, raw.kinds, values, lineage, raw.device_ids, raw.times)
    return clean, out, AttackTrace(AttackMode.DRPA, j, labels, pattern, eps)


# --------------------------------------------------------------------------
# ROPA


def ropa_weights(candidates: np.ndarray, center, epsilon: float, sensitivity: float) -> np.ndarray:
    """Normalized ``exp(-eps |x - center| / Delta f)`` over candidates (last axis)."""
    x = np.asarray(candidates, dtype=np.float64)
    if x.size == 0:
        raise ConfigurationError("ROPA candidate set is empty")
    c = np.asarray(center, dtype=np.float64)[..., None]
    dist = np.abs(x - c)
    if math.isinf(sensitivity):
        logits = np.zeros_like(dist)
    else:
        logits = -epsilon * dist / sensitivity
    logits = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def sample_from_weights(candidates: np.ndarray, weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw along the last axis of ``weights``."""
    cdf = np.cumsum(weights, axis=-1)
    idx = (cdf < (u[..., None] * cdf[..., -1:])).sum(axis=-1)
    idx = np.minimum(idx, weights.shape[-1] - 1)
    return np.asarray(candidates)[idx]


def ropa_candidates(kind, cfg: AttackConfig, ldp: LdpConfig) -> np.ndarray:
    """Candidate outputs: explicit set, category indices, or a grid over the output support."""
    if cfg.candidates is not None:
        c = np.asarray(cfg.candidates, dtype=np.float64)
        if c.size == 0:
            raise ConfigurationError("ROPA candidate set is empty")
        return c
    if isinstance(kind, Discrete):
        return np.arange(kind.size, dtype=np.float64)
    b = kind.size / ldp.epsilon if math.isfinite(ldp.epsilon) else 0.0
    lo = kind.lo - cfg.grid_margin * b + min(cfg.drift_low, 0.0)
    hi = kind.hi + cfg.grid_margin * b + max(cfg.drift_high, 0.0)
    return np.linspace(lo, hi, cfg.grid_points)


def apply_ropa(perturbed: TimeSeriesDataset, cfg: AttackConfig, ldp) -> tuple[TimeSeriesDataset, AttackTrace]:
    """Resample poisoned devices' outputs of the target attribute."""
    cfg.validate_for(perturbed)
    j = cfg.target
    configs = _as_configs(perturbed, ldp)
    kind = perturbed.kinds[j]
    n, T = perturbed.n, perturbed.T
    labels = _labels(n, cfg.poisoned)
    if not cfg.poisoned:
        return perturbed, AttackTrace(AttackMode.ROPA, j, labels, np.zeros((n, T)))
    M = list(cfg.poisoned)
    ldp_j = configs[j]
    rng = np.random.default_rng(cfg.seed)
    drift = cfg.drift_low + (cfg.drift_high - cfg.drift_low) * open_uniform(rng, T)
    u = open_uniform(rng, (len(M), T))
    cand = ropa_candidates(kind, cfg, ldp_j)
    sens = cfg.sensitivity if cfg.sensitivity is not None else (kind.size if isinstance(kind, Continuous) else 1.0)
    legit = perturbed.values[M, j, :]
    center = legit + drift[None, :]
    weights = ropa_weights(cand, center, ldp_j.epsilon, sens)
    new = sample_from_weights(cand, weights, u)
    pattern = np.zeros((n, T))
    delta = new - legit
    if isinstance(kind, Continuous) and (cfg.gamma is not None or cfg.eta is not None):
        delta = cap_pattern(delta, cfg.gamma, cfg.eta)
        new = legit + delta
    pattern[M, :] = delta
    values = np.array(perturbed.values, copy=True)
    values[M, j, :] = new
    out = perturbed.with_values(values, Provenance.POISONED)
    return out, AttackTrace(AttackMode.ROPA, j, labels, pattern)


# --------------------------------------------------------------------------
# end-to-end pipeline


def poisoned_pipeline(raw: TimeSeriesDataset, cfg: AttackConfig, ldp, rng: np.random.Generator
                      ) -> tuple[TimeSeriesDataset, TimeSeriesDataset, AttackTrace]:
    """Run clean and poisoned pipelines on shared LDP uniforms.

    Returns ``(clean_perturbed, poisoned_perturbed, trace)``.  With an empty
    poisoned set both outputs are bit-identical.
    """
    configs = _as_configs(raw, ldp)
    draws = draw_uniforms((raw.n, raw.T), configs, rng)
    if cfg.mode is AttackMode.DRPA:
        return _drpa_from_draws(raw, cfg, configs, draws)
    clean = perturb_with_uniforms(raw, configs, draws)
    if cfg.mode is AttackMode.DIPA:
        poisoned_raw, trace = apply_dipa(raw, cfg)
        if not cfg.poisoned:
            return clean, clean, trace
        out = perturb_with_uniforms(poisoned_raw, configs, draws)
        j = cfg.target
        if isinstance(raw.kinds[j], Discrete):
            trace = AttackTrace(trace.mode, j, trace.labels, out.values[:, j, :] - clean.values[:, j, :])
        return clean, out, trace
    out, trace = apply_ropa(clean, cfg, configs)
    return clean, out, trace


# --------------------------------------------------------------------------
# bound checks


def distortion_bound(ratio: float, epsilon: float, lipschitz: float = 1.0) -> float:
    """``L * (m/n) * (e^eps - 1)``; with L = 1 this is the per-device normalized bound."""
    return lipschitz * ratio * math.expm1(epsilon)


def correlation_bound(ratio: float, epsilon: float, sigma_x: float) -> float | None:
    """``(m/n) (e^eps - 1) / sigma_x``; ``None`` when ``sigma_x = 0``."""
    if sigma_x <= 0:
        return None
    return ratio * math.expm1(epsilon) / sigma_x


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / den if den > 0 else float("nan")


@dataclass
class DistortionReport:
    sqr_l1: np.ndarray
    delta_rho: dict[int, float]
    ratio: float
    epsilon: float
    sigma_x: float
    rho_bound: float | None
    mean_bound: float

    def to_dict(self) -> dict:
        return {
            "sqr_l1": [float(v) for v in self.sqr_l1],
            "sqr_l1_max": float(self.sqr_l1.max()) if self.sqr_l1.size else 0.0,
            "delta_rho": {str(k): v for k, v in sorted(self.delta_rho.items())},
            "ratio": self.ratio,
            "epsilon": self.epsilon,
            "sigma_x": self.sigma_x,
            "rho_bound": self.rho_bound,
            "mean_bound": self.mean_bound,
        }


def measure_distortion(clean_sqr: Sequence[np.ndarray], poisoned_sqr: Sequence[np.ndarray],
                       target: int, ratio: float, ldp: LdpConfig) -> DistortionReport:
    """Compare per-attribute SQR series of the clean and poisoned pipelines.

    ``clean_sqr[j]`` is ``(T,)`` for means or ``(T, K)`` for frequencies.
    ``delta_rho[j] = |rho(poisoned x, clean y) - rho(clean x, clean y)|`` for
    every other scalar-valued attribute ``j``.
    """
    if len(clean_sqr) != len(poisoned_sqr):
        raise ConfigurationError("clean and poisoned SQR lists differ in length")
    for a, b in zip(clean_sqr, poisoned_sqr):
        if np.shape(a) != np.shape(b):
            raise ConfigurationError("clean and poisoned SQR series differ in shape")
    cx = np.asarray(clean_sqr[target], dtype=np.float64)
    px = np.asarray(poisoned_sqr[target], dtype=np.float64)
    diff = np.abs(px - cx)
    l1 = diff.sum(axis=1) if diff.ndim == 2 else diff
    delta_rho: dict[int, float] = {}
    sigma_x = float(cx.std()) if cx.ndim == 1 else 0.0
    if cx.ndim == 1:
        for j, y in enumerate(clean_sqr):
            y = np.asarray(y, dtype=np.float64)
            if j == target or y.ndim != 1:
                continue
            ru, rc = _pearson(cx, y), _pearson(px, y)
            if math.isfinite(ru) and math.isfinite(rc):
                delta_rho[j] = abs(rc - ru)
    return DistortionReport(
        sqr_l1=l1,
        delta_rho=delta_rho,
        ratio=ratio,
        epsilon=ldp.epsilon,
        sigma_x=sigma_x,
        rho_bound=correlation_bound(ratio, ldp.epsilon, sigma_x),
        mean_bound=distortion_bound(ratio, ldp.epsilon),
    )


def dataset_sqr_series(ds: TimeSeriesDataset, configs: Sequence[LdpConfig]) -> list[np.ndarray]:
    return [sqr_series(ds.values[:, j, :], configs[j], perturbed=True) for j in range(ds.k)]


@dataclass(frozen=True)
class ThresholdDetector:
    """Fires when ``statistic(output) > threshold``; statistic defaults to identity."""

    threshold: float
    statistic: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, outputs: np.ndarray) -> np.ndarray:
        x = np.asarray(outputs, dtype=np.float64)
        s = self.statistic(x) if self.statistic is not None else x
        return (np.asarray(s) > self.threshold).astype(np.int64)


@dataclass(frozen=True)
class StealthReport:
    clean_rate: float
    poisoned_rate: float
    gap: float
    bound: float
    stderr: float
    within_bound: bool


def verify_stealth(clean_outputs, poisoned_outputs, detector: ThresholdDetector,
                   epsilon: float, epsilon_prime: float = 0.0, slack_sigmas: float = 3.0) -> StealthReport:
    """Empirical detection-rate gap against the ``e^(eps + eps') - 1`` bound."""
    a = detector(np.asarray(clean_outputs))
    b = detector(np.asarray(poisoned_outputs))
    if a.size == 0 or b.size == 0:
        raise ConfigurationError("verify_stealth needs non-empty samples")
    pa, pb = float(a.mean()), float(b.mean())
    stderr = math.sqrt(pa * (1 - pa) / a.size + pb * (1 - pb) / b.size)
    bound = math.expm1(epsilon + epsilon_prime)
    gap = abs(pa - pb)
    return StealthReport(pa, pb, gap, bound, stderr, gap <= bound + slack_sigmas * stderr)

"""Latent-bias feature mining by repeated random sub-sampling and aggregation.

For device ``i`` at time ``t`` each of ``s`` sub-samples holds ``i`` plus
``k - 1`` other devices, ``k = round(fraction * n)``.  A feature compares
device ``i``'s trailing report statistic with the statistic of the
sub-sample and the ``s`` values are aggregated into ``F[i, t]``.

Sub-sample membership is keyed by device identifiers through a splitmix64
hash, so permuting the device order permutes the feature rows and nothing
else.

Per-device statistics are taken over the trailing ``memory`` reports
(``None``: every report up to ``t``).  Discrete reports are one-hot encoded,
so a per-device "mean" is a category-frequency vector and differences are
L1 norms.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dataset import Continuous, Discrete
from ..errors import ConfigurationError, InsufficientDataError

KL_FLOOR = 1e-6


class FeatureKind(str, enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"
    VARIANCE = "variance"
    MAE = "mae"
    KL = "kl"
    SQR_BIAS = "sqr-bias"
    HT_STRATIFIED = "ht-stratified"
    HT_UNSTRATIFIED = "ht-unstratified"
    INDIVIDUAL_VARIANCE = "individual-variance"


ALL_KINDS = tuple(FeatureKind)


@dataclass(frozen=True)
class BiasFeatureSpec:
    kinds: tuple[FeatureKind, ...] = ALL_KINDS
    samples: int = 20
    fraction: float = 0.5
    aggregate: str = "mean"
    memory: int | None = None
    bins: int = 8
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kinds", tuple(FeatureKind(k) for k in self.kinds))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if not self.kinds:
            raise ConfigurationError("at least one feature kind is required")
        if self.samples < 1:
            raise ConfigurationError("sampling count s must be >= 1")
        if not 0 < self.fraction <= 1:
            raise ConfigurationError("sub-sample fraction must lie in (0, 1]")
        if self.aggregate not in ("mean", "median"):
            raise ConfigurationError(f"unknown aggregation {self.aggregate!r}")
        if self.memory is not None and self.memory < 1:
            raise ConfigurationError("memory must be >= 1 or None")
        if self.bins < 2:
            raise ConfigurationError("need at least two histogram bins")

    def sample_size(self, n: int) -> int:
        k = int(round(self.fraction * n))
        if k < 1:
            raise ConfigurationError(f"fraction {self.fraction} of {n} devices rounds to an empty sub-sample")
        if k < 2:
            raise ConfigurationError("sub-samples need device i plus at least one other device")
        return k


@dataclass(frozen=True)
class Reference:
    """Clean-history statistics of the perturbed reports of one attribute.

    ``mean`` and ``std`` are per component (one for continuous reports, one per
    category for one-hot discrete reports); ``edges`` are interior histogram
    bin edges for continuous reports.
    """

    mean: np.ndarray
    std: np.ndarray
    edges: np.ndarray | None

    @classmethod
    def from_reports(cls, reports: np.ndarray, kind, bins: int = 8) -> "Reference":
        enc = encode_reports(reports, kind)
        flat = enc.reshape(-1, enc.shape[-1])
        std = np.maximum(flat.std(axis=0), 1e-12)
        edges = None
        if isinstance(kind, Continuous):
            edges = np.quantile(np.asarray(reports, dtype=np.float64).ravel(), np.linspace(0, 1, bins + 1)[1:-1])
        return cls(flat.mean(axis=0), std, edges)


@dataclass(frozen=True, eq=False)
class BiasFeatureMatrix:
    """Rows are devices, columns consecutive time steps ``start .. start + width``."""

    values: np.ndarray
    kind: str
    start: int
    labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ConfigurationError("feature matrix must be 2-D")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("feature matrix contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path, device_ids: Sequence[str] | None = None) -> None:
        ids = device_ids or [str(i) for i in range(self.values.shape[0])]
        cols = [f"t{self.start + c}" for c in range(self.width)]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# feature: {self.kind}\n# window: {self.start},{self.start + self.width}\n")
            fh.write(",".join(["device", *cols] + (["label"] if self.labels is not None else [])) + "\n")
            for r, dev in enumerate(ids):
                row = [dev, *(repr(float(x)) for x in self.values[r])]
                if self.labels is not None:
                    row.append(str(int(self.labels[r])))
                fh.write(",".join(row) + "\n")


# --------------------------------------------------------------------------
# hashing and sub-sampling

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def splitmix64(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def device_keys(device_ids: Sequence) -> np.ndarray:
    """Stable 64-bit key per device identifier."""
    out = [int.from_bytes(hashlib.blake2b(str(d).encode(), digest_size=8).digest(), "little") for d in device_ids]
    return np.array(out, dtype=np.uint64)


def subsample_indices(keys: np.ndarray, t: int, samples: int, k: int, seed: int) -> np.ndarray:
    """``(n, s, k)`` device indices; slot 0 of row ``i`` is ``i`` itself."""
    n = keys.size
    with np.errstate(over="ignore"):
        base = splitmix64(np.uint64(seed) ^ splitmix64(np.uint64(t) + np.uint64(0x632BE59BD9B4E019)))
        rs = splitmix64(base ^ np.arange(samples, dtype=np.uint64) * np.uint64(0xD1B54A32D192ED03))
        hi = splitmix64(keys[:, None, None] ^ rs[None, :, None])
        h = splitmix64(hi ^ splitmix64(keys)[None, None, :])
    h[np.arange(n), :, np.arange(n)] = _M64
    if k - 1 >= n:
        raise ConfigurationError("sub-sample larger than the device population")
    others = np.argpartition(h, k - 2, axis=-1)[..., : k - 1] if k > 1 else np.zeros((n, samples, 0), int)
    own = np.broadcast_to(np.arange(n)[:, None, None], (n, samples, 1))
    return np.concatenate([own, others], axis=-1)


# --------------------------------------------------------------------------
# per-device trailing statistics


def encode_reports(reports: np.ndarray, kind) -> np.ndarray:
    """``(n, T, D)``: the value itself (D=1) or a one-hot category vector (D=K)."""
    r = np.asarray(reports, dtype=np.float64)
    if isinstance(kind, Discrete):
        idx = np.rint(r).astype(np.int64)
        return (idx[..., None] == np.arange(kind.size)).astype(np.float64)
    return r[..., None]


def _trailing_sum(x: np.ndarray, memory: int | None) -> np.ndarray:
    c = np.cumsum(x, axis=1)
    if memory is None:
        return c
    out = c.copy()
    out[:, memory:] -= c[:, :-memory]
    return out


@dataclass(frozen=True, eq=False)
class DeviceStats:
    count: np.ndarray   # (T,)
    mean: np.ndarray    # (n, T, D)
    var: np.ndarray     # (n, T) total variance over components
    median: np.ndarray  # (n, T, D)
    hist: np.ndarray    # (n, T, H)


def device_stats(reports: np.ndarray, kind, spec: BiasFeatureSpec, reference: Reference) -> DeviceStats:
    enc = encode_reports(reports, kind)
    n, T, D = enc.shape
    mem = spec.memory
    count = np.minimum(np.arange(1, T + 1), mem if mem is not None else T).astype(np.float64)
    s1 = _trailing_sum(enc, mem)
    s2 = _trailing_sum(enc * enc, mem)
    mean = s1 / count[None, :, None]
    var = np.maximum(s2 / count[None, :, None] - mean * mean, 0.0).sum(axis=-1)
    if isinstance(kind, Discrete):
        median = mean
        hist = mean
    else:
        r = np.asarray(reports, dtype=np.float64)
        median = np.empty((n, T, 1))
        for t in range(T):
            lo = 0 if mem is None else max(0, t + 1 - mem)
            median[:, t, 0] = np.median(r[:, lo: t + 1], axis=1)
        edges = reference.edges if reference.edges is not None else np.zeros(0)
        onehot = (np.searchsorted(edges, r)[..., None] == np.arange(edges.size + 1)).astype(np.float64)
        hist = _trailing_sum(onehot, mem) / count[None, :, None]
    return DeviceStats(count, mean, var, median, hist)


# --------------------------------------------------------------------------
# features


def _l1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b).sum(axis=-1)


def _kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    p = np.maximum(p, KL_FLOOR)
    q = np.maximum(q, KL_FLOOR)
    p = p / p.sum(axis=-1, keepdims=True)
    q = q / q.sum(axis=-1, keepdims=True)
    return (p * np.log(p / q)).sum(axis=-1)


def _features_at(kind: FeatureKind, t: int, st: DeviceStats, idx: np.ndarray, ref: Reference) -> np.ndarray:
    """``(n, s)`` feature values of every device over its sub-samples at time ``t``."""
    m = st.mean[:, t, :]                     # (n, D)
    ms = m[idx]                              # (n, s, k, D)
    own = m[:, None, :]
    k = idx.shape[-1]
    if kind is FeatureKind.MEAN:
        return _l1(own, ms.mean(axis=2))
    if kind is FeatureKind.MEDIAN:
        med = st.median[:, t, :]
        return _l1(med[:, None, :], np.median(med[idx], axis=2))
    if kind is FeatureKind.VARIANCE:
        # Device i's contribution to the between-device dispersion of the sub-sample.
        with_i = ms.var(axis=2).sum(axis=-1)
        without = ms[:, :, 1:, :].var(axis=2).sum(axis=-1)
        return with_i - without
    if kind is FeatureKind.MAE:
        return _l1(own[:, :, None, :], ms[:, :, 1:, :]).mean(axis=-1)
    if kind is FeatureKind.KL:
        h = st.hist[:, t, :]
        return _kl(h[:, None, :], h[idx].mean(axis=2))
    if kind is FeatureKind.SQR_BIAS:
        with_i = _l1(ms.mean(axis=2), ref.mean)
        without = _l1(ms[:, :, 1:, :].mean(axis=2), ref.mean)
        return with_i - without
    se = ref.std / np.sqrt(st.count[t])
    if kind is FeatureKind.HT_UNSTRATIFIED:
        z_with = np.abs((ms.mean(axis=2) - ref.mean) / (se / np.sqrt(k))).sum(axis=-1)
        z_without = np.abs((ms[:, :, 1:, :].mean(axis=2) - ref.mean) / (se / np.sqrt(k - 1))).sum(axis=-1)
        return z_with - z_without
    if kind is FeatureKind.HT_STRATIFIED:
        z = np.abs((m - ref.mean) / se).sum(axis=-1)   # per-device stratum statistic
        return z[:, None] - z[idx].mean(axis=2)
    if kind is FeatureKind.INDIVIDUAL_VARIANCE:
        # Log scale and a sub-sample median keep heavy-tailed noise from swamping the contrast.
        v = np.log(st.var[:, t] + 1e-12)
        return v[:, None] - np.median(v[idx], axis=2)
    raise ConfigurationError(f"unknown feature kind {kind!r}")


def mine_features(reports: np.ndarray, attr_kind, spec: BiasFeatureSpec, reference: Reference,
                  device_ids: Sequence | None = None, start: int = 0, stop: int | None = None,
                  labels: np.ndarray | None = None) -> dict[FeatureKind, BiasFeatureMatrix]:
    """One ``n x (stop - start)`` matrix per feature kind in ``spec``.

    ``reports`` is the ``(n, T)`` block of one attribute; statistics at time
    ``t`` use reports up to ``t`` only.
    """
    r = np.asarray(reports, dtype=np.float64)
    if r.ndim != 2:
        raise ConfigurationError("reports must be an (n, T) block")
    n, T = r.shape
    stop = T if stop is None else stop
    if not 0 <= start < stop <= T:
        raise InsufficientDataError(f"empty feature window [{start}, {stop}) for T={T}")
    k = spec.sample_size(n)
    ids = device_ids if device_ids is not None else [str(i) for i in range(n)]
    if len(ids) != n:
        raise ConfigurationError("one device id per row is required")
    keys = device_keys(ids)
    st = device_stats(r, attr_kind, spec, reference)
    agg = np.mean if spec.aggregate == "mean" else np.median
    out = {kind: np.empty((n, stop - start)) for kind in spec.kinds}
    for t in range(start, stop):
        idx = subsample_indices(keys, t, spec.samples, k, spec.seed)
        for kind in spec.kinds:
            out[kind][:, t - start] = agg(_features_at(kind, t, st, idx, reference), axis=1)
    return {kind: BiasFeatureMatrix(v, kind.value, start, labels) for kind, v in out.items()}


def raw_features(reports: np.ndarray, attr_kind, start: int = 0, stop: int | None = None,
                 labels: np.ndarray | None = None) -> BiasFeatureMatrix:
    """Unamplified baseline: each report's deviation from the population mean at that time."""
    enc = encode_reports(reports, attr_kind)
    T = enc.shape[1]
    stop = T if stop is None else stop
    pop = enc.mean(axis=0, keepdims=True)
    dev = enc - pop
    vals = dev[..., 0] if isinstance(attr_kind, Continuous) else np.abs(dev).sum(axis=-1)
    return BiasFeatureMatrix(vals[:, start:stop], "raw", start, labels)


def stack_features(matrices: dict | Sequence[BiasFeatureMatrix]) -> np.ndarray:
    """Concatenate feature kinds column-wise into one ``(n, kinds * width)`` design matrix."""
    ms = list(matrices.values()) if isinstance(matrices, dict) else list(matrices)
    return np.hstack([m.values for m in ms])

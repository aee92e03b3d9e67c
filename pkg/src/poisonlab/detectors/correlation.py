"""Attribute-correlation detector on SQR time series.

Estimators by pair kind:

* continuous / continuous: Pearson per sliding window, combined with weights
  ``w = sqrt(n Var(rho))`` where ``Var(rho) = (1 - rho^2)^2 / (n - 1)``;
* continuous / discrete: point-biserial correlation against each one-hot
  category of the per-time modal category, combined with ``w_K = sqrt(n_K |rho_K|)``;
* discrete / discrete: l1-penalized CCA on the frequency vectors.

Confidence intervals come from a residual bootstrap.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..dataset import AttributeKind, Continuous
from ..errors import ConfigurationError, InsufficientDataError


class Estimator(str, enum.Enum):
    PEARSON_WEIGHTED = "pearson-weighted"
    POINT_BISERIAL = "point-biserial-composite"
    SPARSE_CCA = "sparse-cca"


def estimator_for(kind_a: AttributeKind, kind_b: AttributeKind) -> Estimator:
    ca, cb = isinstance(kind_a, Continuous), isinstance(kind_b, Continuous)
    if ca and cb:
        return Estimator.PEARSON_WEIGHTED
    if ca or cb:
        return Estimator.POINT_BISERIAL
    return Estimator.SPARSE_CCA


# --------------------------------------------------------------------------
# Pearson family


def pearson(x, y) -> float:
    """Textbook Pearson correlation; NaN when either series is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = batch_pearson(x, y)
    return float(r)


def batch_pearson(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pearson along the last axis with broadcasting; NaN for zero-variance rows."""
    xc = x - x.mean(axis=-1, keepdims=True)
    yc = y - y.mean(axis=-1, keepdims=True)
    sxy = (xc * yc).sum(axis=-1)
    sxx = (xc * xc).sum(axis=-1)
    syy = (yc * yc).sum(axis=-1)
    den = np.sqrt(sxx * syy)
    # Relative floor so series that are constant up to rounding count as degenerate.
    scale = np.maximum(np.abs(x).max(axis=-1), np.abs(y).max(axis=-1)) ** 2 * x.shape[-1]
    ok = (sxx > 1e-24 * np.maximum(scale, 1e-300)) & (syy > 1e-24 * np.maximum(scale, 1e-300))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(ok, sxy / np.where(ok, den, 1.0), np.nan)
    return np.clip(r, -1.0, 1.0)


def window_pearsons(x, y, ell: int, stride: int = 1) -> np.ndarray:
    """Pearson of every window ``[t, t + ell)``; leading axes of ``y`` broadcast."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if ell < 3 or x.shape[-1] < ell:
        raise InsufficientDataError(f"need series length >= ell >= 3 (ell={ell}, T={x.shape[-1]})")
    xw = sliding_window_view(x, ell, axis=-1)[..., ::stride, :]
    yw = sliding_window_view(y, ell, axis=-1)[..., ::stride, :]
    return batch_pearson(xw, yw)


def pearson_weights(rhos: np.ndarray, ell: int, scheme: str = "sqrt-variance") -> np.ndarray:
    """Window weights; NaN (degenerate) windows get weight 0.

    ``sqrt-variance``: ``sqrt(ell * Var(rho))``; ``inverse-variance``: ``1 / Var(rho)``;
    ``equal``: 1.
    """
    valid = np.isfinite(rhos)
    r = np.where(valid, rhos, 0.0)
    var = (1.0 - r * r) ** 2 / (ell - 1)
    if scheme == "sqrt-variance":
        w = np.sqrt(ell * var)
    elif scheme == "inverse-variance":
        with np.errstate(divide="ignore"):
            w = np.where(var > 0, 1.0 / np.maximum(var, 1e-300), 1e12)
    elif scheme == "equal":
        w = np.ones_like(r)
    else:
        raise ConfigurationError(f"unknown weight scheme {scheme!r}")
    return np.where(valid, w, 0.0)


def combine_windows(rhos: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted mean over the last axis; equal weights when all valid windows weigh 0."""
    valid = np.isfinite(rhos)
    r = np.where(valid, rhos, 0.0)
    wsum = weights.sum(axis=-1)
    nvalid = valid.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        weighted = (weights * r).sum(axis=-1) / wsum
        equal = r.sum(axis=-1) / nvalid
    out = np.where(wsum > 0, weighted, equal)
    return np.where(nvalid > 0, out, np.nan)


def weighted_pearson(x, y, ell: int, stride: int = 1, scheme: str = "sqrt-variance") -> float:
    rhos = window_pearsons(x, y, ell, stride)
    return float(combine_windows(rhos, pearson_weights(rhos, ell, scheme)))


# --------------------------------------------------------------------------
# point-biserial family


def point_biserial(x, indicator) -> float:
    """``(mu_1 - mu_0) / sigma * sqrt(n_1 n_0 / n^2)`` with population sigma."""
    return float(batch_point_biserial(np.asarray(x, float), np.asarray(indicator, float)))


def batch_point_biserial(x: np.ndarray, ind: np.ndarray) -> np.ndarray:
    """Point-biserial along the last axis; NaN if a group is empty or ``x`` is constant."""
    n = x.shape[-1]
    n1 = ind.sum(axis=-1)
    n0 = n - n1
    s1 = (x * ind).sum(axis=-1)
    s0 = x.sum(axis=-1) - s1
    sigma = x.std(axis=-1)
    ok = (n1 > 0) & (n0 > 0) & (sigma > 1e-12 * np.maximum(np.abs(x).max(axis=-1), 1e-300))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (s1 / n1 - s0 / n0) / sigma * np.sqrt(n1 * n0) / n
    return np.where(ok, np.clip(r, -1.0, 1.0), np.nan)


def onehot_mode(freq: np.ndarray) -> np.ndarray:
    """One-hot of the modal category per time step (first on ties); last axis = categories."""
    idx = np.argmax(freq, axis=-1)
    return (idx[..., None] == np.arange(freq.shape[-1])).astype(np.float64)


def composite_point_biserial(x, freq) -> float:
    return float(batch_composite_point_biserial(np.asarray(x, float), np.asarray(freq, float)))


def batch_composite_point_biserial(x: np.ndarray, freq: np.ndarray) -> np.ndarray:
    """``x``: ``(..., T)``; ``freq``: ``(..., T, K)``.  NaN when every category weight is 0."""
    onehot = onehot_mode(freq)
    ind = np.moveaxis(onehot, -1, -2)  # (..., K, T)
    rk = batch_point_biserial(x[..., None, :], ind)
    nk = ind.sum(axis=-1)
    valid = np.isfinite(rk)
    r = np.where(valid, rk, 0.0)
    w = np.sqrt(nk * np.abs(r))
    wsum = w.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (w * r).sum(axis=-1) / wsum
    return np.where(wsum > 0, out, np.nan)


# --------------------------------------------------------------------------
# sparse CCA


def _inv_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    w = np.maximum(w, 1e-12 * max(w.max(), 1e-300))
    return (V / np.sqrt(w)) @ V.T


def soft_threshold(a: np.ndarray, lam: float) -> np.ndarray:
    return np.sign(a) * np.maximum(np.abs(a) - lam, 0.0)


@dataclass(frozen=True, eq=False)
class CcaResult:
    rho: float
    u: np.ndarray
    v: np.ndarray
    iterations: int
    converged: bool


def sparse_cca_cov(Sxx, Syy, Sxy, lam: float = 0.1, max_iter: int = 200, tol: float = 1e-6) -> CcaResult:
    """Maximize ``u' Sxy v - lam (|u|_1 + |v|_1)`` under ``u' Sxx u = v' Syy v = 1``.

    Starts from the leading pair of the whitened cross-covariance (the exact
    solution when ``lam = 0``), then alternates soft-thresholded updates with
    rescaling to unit canonical variance.
    """
    Sxx = np.atleast_2d(np.asarray(Sxx, dtype=np.float64))
    Syy = np.atleast_2d(np.asarray(Syy, dtype=np.float64))
    Sxy = np.atleast_2d(np.asarray(Sxy, dtype=np.float64))
    if lam < 0:
        raise ConfigurationError("sparsity lambda must be >= 0")
    Wx, Wy = _inv_sqrt(Sxx), _inv_sqrt(Syy)
    U, s, Vt = np.linalg.svd(Wx @ Sxy @ Wy)
    u, v = Wx @ U[:, 0], Wy @ Vt[0]
    if lam == 0:
        return CcaResult(float(min(s[0], 1.0)), u, v, 0, True)
    Sxx_inv, Syy_inv = Wx @ Wx, Wy @ Wy
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        un = soft_threshold(Sxx_inv @ (Sxy @ v), lam)
        nu = math.sqrt(max(float(un @ Sxx @ un), 0.0))
        if nu == 0.0:
            return CcaResult(0.0, un, v, it, True)
        un = un / nu
        vn = soft_threshold(Syy_inv @ (Sxy.T @ un), lam)
        nv = math.sqrt(max(float(vn @ Syy @ vn), 0.0))
        if nv == 0.0:
            return CcaResult(0.0, un, vn, it, True)
        vn = vn / nv
        step = max(np.max(np.abs(un - u)), np.max(np.abs(vn - v)))
        u, v = un, vn
        if step < tol:
            converged = True
            break
    den = math.sqrt(float(u @ Sxx @ u) * float(v @ Syy @ v))
    rho = float(u @ Sxy @ v) / den if den > 0 else 0.0
    return CcaResult(float(np.clip(rho, -1.0, 1.0)), u, v, it, converged)


def _cca_columns(block: np.ndarray) -> np.ndarray:
    """Drop the redundant last category and any constant columns, then standardize."""
    b = block[:, :-1] if block.shape[1] > 1 else block
    sd = b.std(axis=0)
    keep = sd > 1e-12
    b = b[:, keep]
    return (b - b.mean(axis=0)) / sd[keep]


def sparse_cca(X, Y, lam: float = 0.1, max_iter: int = 200, tol: float = 1e-6, ridge: float = 1e-4) -> float:
    """Sparse canonical correlation of two frequency series ``(T, Kx)``, ``(T, Ky)``."""
    X = _cca_columns(np.asarray(X, dtype=np.float64))
    Y = _cca_columns(np.asarray(Y, dtype=np.float64))
    if X.shape[1] == 0 or Y.shape[1] == 0:
        return float("nan")
    T = X.shape[0]
    Sxx = X.T @ X / T + ridge * np.eye(X.shape[1])
    Syy = Y.T @ Y / T + ridge * np.eye(Y.shape[1])
    Sxy = X.T @ Y / T
    return sparse_cca_cov(Sxx, Syy, Sxy, lam, max_iter, tol).rho


# --------------------------------------------------------------------------
# pair estimators and bootstrap


@dataclass(frozen=True)
class PairSettings:
    ell: int = 12
    stride: int = 1
    weight: str = "sqrt-variance"
    lam: float = 0.1
    cca_max_iter: int = 200
    cca_tol: float = 1e-6


def _as_2d(series: np.ndarray) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    return s[:, None] if s.ndim == 1 else s


def baseline_correlation(est: Estimator, x: np.ndarray, y: np.ndarray, st: PairSettings) -> np.ndarray:
    """Baseline estimate; ``y`` may carry leading bootstrap axes.

    For point-biserial pairs ``x`` is the continuous series; for CCA pairs
    ``y`` leading axes are looped over.
    """
    if est is Estimator.PEARSON_WEIGHTED:
        rhos = window_pearsons(x, y, st.ell, st.stride)
        return combine_windows(rhos, pearson_weights(rhos, st.ell, st.weight))
    if est is Estimator.POINT_BISERIAL:
        return batch_composite_point_biserial(np.broadcast_to(x, y.shape[:-1]), y)
    if y.ndim == 2:
        return np.asarray(sparse_cca(x, y, st.lam, st.cca_max_iter, st.cca_tol))
    return np.array([sparse_cca(x, yb, st.lam, st.cca_max_iter, st.cca_tol) for yb in y])


def window_correlation(est: Estimator, x: np.ndarray, y: np.ndarray, st: PairSettings) -> float:
    """Observed correlation on a single window (no window splitting)."""
    if est is Estimator.PEARSON_WEIGHTED:
        return pearson(x, y)
    if est is Estimator.POINT_BISERIAL:
        return composite_point_biserial(x, y)
    return sparse_cca(x, y, st.lam, st.cca_max_iter, st.cca_tol)


def residual_bootstrap_samples(x: np.ndarray, y: np.ndarray, B: int, rng: np.random.Generator) -> np.ndarray:
    """``B`` resampled copies of ``y``: OLS fit on ``[1, x]`` plus resampled residual rows."""
    X = np.column_stack([np.ones(len(x)), _as_2d(x)])
    Y = _as_2d(y)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    fitted = X @ coef
    resid = Y - fitted
    T = len(Y)
    idx = rng.integers(0, T, size=(B, T))
    out = fitted[None, :, :] + resid[idx]
    return out[..., 0] if np.ndim(y) == 1 else out


@dataclass(frozen=True, eq=False)
class PairBaseline:
    i: int
    j: int
    estimator: Estimator
    rho_hat: float
    lower: float
    upper: float
    deviations: np.ndarray  # |rho^(b) - rho_hat| per bootstrap replicate

    @property
    def computable(self) -> bool:
        return math.isfinite(self.rho_hat)

    def to_dict(self) -> dict:
        return {
            "pair": [self.i, self.j],
            "estimator": self.estimator.value,
            "rho_hat": self.rho_hat if self.computable else None,
            "ci": [self.lower, self.upper] if self.computable else None,
        }


@dataclass(frozen=True)
class CorrelationBaseline:
    pairs: dict
    bands: dict
    settings: PairSettings
    B: int
    delta: float

    def pairs_of(self, j: int) -> list[PairBaseline]:
        return [p for (a, b), p in sorted(self.pairs.items()) if j in (a, b)]

    def to_dict(self) -> dict:
        return {
            "ell": self.settings.ell,
            "B": self.B,
            "delta": self.delta,
            "lambda": self.settings.lam,
            "weight": self.settings.weight,
            "pairs": [p.to_dict() for _, p in sorted(self.pairs.items())],
            "bands": {str(j): list(b) if b is not None else None for j, b in sorted(self.bands.items())},
        }


def _orient(est: Estimator, kinds, i: int, j: int, series) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(x, y)`` with the continuous series first for point-biserial pairs."""
    a, b = series[i], series[j]
    if est is Estimator.POINT_BISERIAL and not isinstance(kinds[i], Continuous):
        a, b = b, a
    return np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)


def all_pairs(k: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(k) for j in range(i + 1, k)]


def build_pair_baseline(series, kinds, i: int, j: int, settings: PairSettings, B: int, delta: float,
                        rng: np.random.Generator) -> PairBaseline:
    est = estimator_for(kinds[i], kinds[j])
    x, y = _orient(est, kinds, i, j, series)
    rho_hat = float(baseline_correlation(est, x, y, settings))
    if not math.isfinite(rho_hat):
        return PairBaseline(i, j, est, float("nan"), float("nan"), float("nan"), np.full(B, np.nan))
    y_star = residual_bootstrap_samples(x, y, B, rng)
    boot = np.asarray(baseline_correlation(est, x, y_star, settings), dtype=np.float64)
    dev = np.abs(boot - rho_hat)
    finite = dev[np.isfinite(dev)]
    half = float(np.quantile(finite, delta)) if finite.size else 0.0
    return PairBaseline(i, j, est, rho_hat, rho_hat - half, rho_hat + half, dev)


def build_correlation_baseline(series: Sequence[np.ndarray], kinds: Sequence[AttributeKind],
                               ell: int = 12, B: int = 200, delta: float = 0.95, lam: float = 0.1,
                               rng: np.random.Generator | int = 0, weight: str = "sqrt-variance",
                               pairs: Sequence[tuple[int, int]] | None = None,
                               stride: int = 1, min_bootstrap: int = 100,
                               selection: str = "all") -> CorrelationBaseline:
    """Baselines and bootstrap intervals for every attribute pair.

    ``series[j]`` is attribute j's clean SQR series: ``(T,)`` or ``(T, K)``.
    The per-attribute band ``bands[j] = [C^L, C^U]`` is the ``(1 - delta, delta)``
    quantile range of the per-replicate sums of ``|rho^(b) - rho_hat|`` over the
    monitored pairs touching j.  ``selection="significant"`` monitors only pairs
    whose interval excludes 0; ``"all"`` monitors every computable pair.
    """
    k = len(series)
    if len(kinds) != k:
        raise ConfigurationError("series and kinds differ in length")
    T = len(series[0])
    if not (3 <= ell <= T):
        raise InsufficientDataError(f"need T >= ell >= 3, got T={T}, ell={ell}")
    if B < min_bootstrap:
        raise ConfigurationError(f"need at least {min_bootstrap} bootstrap replicates, got {B}")
    if not 0 < delta < 1:
        raise ConfigurationError("delta must lie in (0, 1)")
    settings = PairSettings(ell=ell, stride=stride, weight=weight, lam=lam)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pair_list = all_pairs(k) if pairs is None else [tuple(sorted(p)) for p in pairs]
    # One child stream per pair keeps results independent of evaluation order.
    children = rng.spawn(len(pair_list)) if hasattr(rng, "spawn") else [
        np.random.default_rng(s) for s in np.random.SeedSequence(int(rng.integers(2**63))).spawn(len(pair_list))]
    if selection not in ("all", "significant"):
        raise ConfigurationError(f"unknown pair selection {selection!r}")
    out = {}
    for (i, j), child in zip(pair_list, children):
        p = build_pair_baseline(series, kinds, i, j, settings, B, delta, child)
        if selection == "significant" and not (p.computable and (p.lower > 0 or p.upper < 0)):
            continue
        out[(i, j)] = p
    bands = {}
    for a in range(k):
        devs = [p.deviations for (i, j), p in out.items() if a in (i, j) and p.computable]
        if not devs:
            bands[a] = None
            continue
        total = np.nansum(np.stack(devs), axis=0)
        bands[a] = (float(np.quantile(total, 1 - delta)), float(np.quantile(total, delta)))
    return CorrelationBaseline(out, bands, settings, B, delta)


# --------------------------------------------------------------------------
# deviation


@dataclass(frozen=True)
class CorrelationDeviation:
    delta_rho: float
    lambda_c: float
    excluded: int


def boundary_violation(delta_rho: float, band: tuple[float, float]) -> float:
    """``min(|delta_rho - C^L|, |delta_rho - C^U|)``."""
    lo, hi = band
    return min(abs(delta_rho - lo), abs(delta_rho - hi))


def correlation_deviation(observed: dict, baseline: CorrelationBaseline, attr: int) -> CorrelationDeviation:
    """Lambda_C of attribute ``attr`` from observed pair correlations ``{(i, j): rho}``.

    Pairs without a finite baseline or observation are excluded and counted.
    """
    band = baseline.bands.get(attr)
    total, excluded = 0.0, 0
    for p in baseline.pairs_of(attr):
        obs = observed.get((p.i, p.j), observed.get((p.j, p.i)))
        if not p.computable or obs is None or not math.isfinite(obs):
            excluded += 1
            continue
        total += abs(obs - p.rho_hat)
    if band is None:
        return CorrelationDeviation(total, 0.0, excluded)
    return CorrelationDeviation(total, boundary_violation(total, band), excluded)


def observed_pair_series(series, kinds, i: int, j: int, settings: PairSettings) -> np.ndarray:
    """Observed correlation on the trailing window ending at each ``tau >= ell - 1``.

    Returns shape ``(T - ell + 1,)``; entry ``s`` covers ``[s, s + ell)``.
    """
    est = estimator_for(kinds[i], kinds[j])
    x, y = _orient(est, kinds, i, j, series)
    ell = settings.ell
    if est is Estimator.PEARSON_WEIGHTED:
        return window_pearsons(x, y, ell, 1)
    if est is Estimator.POINT_BISERIAL:
        xw = sliding_window_view(x, ell)  # (W, ell)
        yw = np.moveaxis(sliding_window_view(y, ell, axis=0), -1, -2)  # (W, ell, K)
        return batch_composite_point_biserial(xw, yw)
    W = len(x) - ell + 1
    return np.array([sparse_cca(x[s:s + ell], y[s:s + ell], settings.lam, settings.cca_max_iter, settings.cca_tol)
                     for s in range(W)])


def correlation_series(series, kinds, baseline: CorrelationBaseline,
                       cache: dict | None = None, recompute: Sequence[int] = ()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lambda_C, Delta rho and excluded-pair counts for all attributes, one column per trailing window.

    ``cache`` maps pairs to previously computed observed series; pairs touching
    an attribute in ``recompute`` are always recomputed.  The cache is filled in.
    """
    k = len(series)
    settings = baseline.settings
    observed = {}
    for (i, j), p in baseline.pairs.items():
        if not p.computable:
            continue
        if cache is not None and (i, j) in cache and i not in recompute and j not in recompute:
            observed[(i, j)] = cache[(i, j)]
            continue
        obs = observed_pair_series(series, kinds, i, j, settings)
        observed[(i, j)] = obs
        if cache is not None and i not in recompute and j not in recompute:
            cache[(i, j)] = obs
    W = len(series[0]) - settings.ell + 1
    lam = np.zeros((k, W))
    drho = np.zeros((k, W))
    excl = np.zeros((k, W), dtype=np.int64)
    for a in range(k):
        band = baseline.bands.get(a)
        for p in baseline.pairs_of(a):
            if not p.computable:
                excl[a] += 1
                continue
            obs = observed[(p.i, p.j)]
            bad = ~np.isfinite(obs)
            excl[a] += bad
            drho[a] += np.where(bad, 0.0, np.abs(obs - p.rho_hat))
        if band is not None:
            lam[a] = np.minimum(np.abs(drho[a] - band[0]), np.abs(drho[a] - band[1]))
    return lam, drho, excl

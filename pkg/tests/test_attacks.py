import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poisonlab.attacks import (
    AttackConfig,
    AttackMode,
    ThresholdDetector,
    apply_dipa,
    apply_drpa,
    apply_ropa,
    assign_budgets,
    choose_poisoned,
    correlation_bound,
    dataset_sqr_series,
    drpa_budgets,
    measure_distortion,
    poisoned_pipeline,
    ropa_weights,
    verify_stealth,
)
from poisonlab.dataset import Continuous, Discrete, Provenance, TimeSeriesDataset, generate_synthetic, weather_like_spec
from poisonlab.errors import ConfigurationError, ConstraintViolation
from poisonlab.ldp import LdpConfig, Mechanism, default_configs, perturb_dataset

UNIT = Continuous(-1.0, 1.0)
LAP = LdpConfig(Mechanism.LAPLACE, 1.0, UNIT)


def one_attr(values, kind=UNIT):
    v = np.asarray(values, dtype=float)
    return TimeSeriesDataset(("x",), (kind,), v.reshape(v.shape[0], 1, -1))


@pytest.fixture(scope="module")
def weather():
    return generate_synthetic(weather_like_spec(n=20, T=30), seed=3)


# ---------------------------------------------------------------- DIPA

def test_dipa_in_range_shift():
    out, trace = apply_dipa(one_attr([[0.5]]), AttackConfig("dipa", 0, (0,), shift=0.3))
    assert out.values[0, 0, 0] == pytest.approx(0.8)
    assert trace.labels.tolist() == [1]
    assert out.provenance is Provenance.POISONED


def test_dipa_clamps_to_boundary():
    out, _ = apply_dipa(one_attr([[0.9]]), AttackConfig("dipa", 0, (0,), shift=0.3))
    assert out.values[0, 0, 0] == 1.0


def test_dipa_without_clamp_raises():
    with pytest.raises(ConstraintViolation):
        apply_dipa(one_attr([[0.9]]), AttackConfig("dipa", 0, (0,), shift=0.3, clamp=False))


def test_dipa_leaves_members_outside_m_untouched():
    ds = one_attr([[0.1, 0.2], [0.3, 0.4]])
    out, trace = apply_dipa(ds, AttackConfig("dipa", 0, (1,), shift=-0.5))
    np.testing.assert_array_equal(out.values[0], ds.values[0])
    assert trace.labels.tolist() == [0, 1]


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-1, 0.5), st.integers(0, 1000))
def test_dipa_outputs_stay_in_valid_range(shift, vlo, seed):
    vr = (vlo, vlo + 0.5)
    rng = np.random.default_rng(seed)
    ds = one_attr(rng.uniform(-1, 1, (6, 5)))
    out, _ = apply_dipa(ds, AttackConfig("dipa", 0, (0, 2, 4), shift=shift, valid_range=vr))
    assert np.all((out.values[[0, 2, 4]] >= vr[0]) & (out.values[[0, 2, 4]] <= vr[1]))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(0.01, 0.3), st.floats(-2, 2), st.integers(0, 1000))
def test_dipa_caps_and_range_hold_together(gamma, eta, shift, seed):
    ds = one_attr(np.random.default_rng(seed).uniform(-1, 1, (3, 12)))
    out, trace = apply_dipa(ds, AttackConfig("dipa", 0, (0, 1), shift=shift, gamma=gamma, eta=eta))
    assert np.all(np.abs(out.values) <= 1)
    assert trace.magnitude_sup <= gamma + 1e-12
    assert trace.variation_sup <= eta + 1e-12


def test_dipa_discrete_stays_categorical():
    ds = one_attr([[0, 1, 2]], Discrete.of_size(3))
    out, _ = apply_dipa(ds, AttackConfig("dipa", 0, (0,), shift=1.6))
    assert out.values[0, 0].tolist() == [2.0, 2.0, 2.0]


# ---------------------------------------------------------------- DRPA

def test_drpa_budgets_sum_exactly():
    b = assign_budgets(5, 5.0, "random", np.random.default_rng(0))
    assert np.all(b > 0)
    assert abs(b.sum() - 5.0) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.floats(0.1, 8.0), st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_drpa_budget_sum_property(m, eps, seed, T):
    cfg = AttackConfig("drpa", 0, tuple(range(m)), seed=seed)
    budgets = drpa_budgets(m + 2, T, cfg, eps)
    assert np.all(budgets > 0)
    np.testing.assert_allclose(budgets[:m].sum(axis=0), m * eps, rtol=0, atol=1e-12 * max(1.0, m * eps))
    assert np.all(budgets[m:] == eps)


def test_fixed_budgets_must_sum():
    with pytest.raises(ConfigurationError):
        assign_budgets(2, 2.0, "fixed", np.random.default_rng(0), fixed=(0.5, 0.5))
    with pytest.raises(ConfigurationError):
        assign_budgets(2, 2.0, "fixed", np.random.default_rng(0), fixed=(2.5, -0.5))


def test_drpa_bias_shifts_expected_report():
    ds = one_attr(np.full((2, 40_000), 0.2))
    out, _ = apply_drpa(ds, AttackConfig("drpa", 0, (0,), budget_rule="equal", bias=0.1), LAP,
                        np.random.default_rng(1))
    # Laplace sd is 2*sqrt(2); 4 standard errors over 40000 draws is about 0.057.
    assert abs(out.values[0, 0].mean() - 0.3) < 0.06
    assert abs(out.values[1, 0].mean() - 0.2) < 0.06


def test_drpa_empty_set_matches_plain_ldp(weather):
    configs = default_configs(weather.kinds, 1.0)
    out, _ = apply_drpa(weather, AttackConfig("drpa", 0), configs, np.random.default_rng(8))
    plain = perturb_dataset(weather, configs, np.random.default_rng(8))
    np.testing.assert_array_equal(out.values, plain.values)


# ---------------------------------------------------------------- ROPA

def test_ropa_weights_closed_form():
    z = 0.2
    w = ropa_weights(np.array([z, z - 0.5, z + 0.5]), z, 1.0, 1.0)
    expected = np.array([1.0, math.exp(-0.5), math.exp(-0.5)])
    expected /= expected.sum()
    np.testing.assert_allclose(w, expected, rtol=0, atol=1e-15)
    np.testing.assert_allclose(w, [0.4519, 0.2741, 0.2741], atol=5e-5)


def test_ropa_infinite_sensitivity_is_uniform():
    w = ropa_weights(np.linspace(-1, 1, 7), 0.3, 1.0, math.inf)
    np.testing.assert_allclose(w, np.full(7, 1 / 7))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40), st.floats(-60, 60),
       st.floats(0.01, 20), st.floats(1e-3, 1e3))
def test_ropa_weights_normalized(cands, center, eps, sens):
    w = ropa_weights(np.array(cands), center, eps, sens)
    assert abs(w.sum() - 1) <= 1e-12
    assert np.all(w >= 0)


def test_ropa_single_candidate_is_identity():
    ds = one_attr([[0.25, -0.5]]).with_values(np.array([[[0.25, -0.5]]]), Provenance.PERTURBED)
    out, _ = apply_ropa(ds, AttackConfig("ropa", 0, (0,), candidates=(0.25,)), LAP)
    assert out.values[0, 0, 0] == 0.25


def test_ropa_empty_candidates_rejected():
    ds = one_attr([[0.0]])
    with pytest.raises(ConfigurationError):
        apply_ropa(ds, AttackConfig("ropa", 0, (0,), candidates=()), LAP)


def test_ropa_drift_biases_outputs():
    ds = one_attr(np.zeros((1, 2000)))
    ds = ds.with_values(ds.values, Provenance.PERTURBED)
    out, trace = apply_ropa(ds, AttackConfig("ropa", 0, (0,), drift_low=1.0, drift_high=1.0, sensitivity=0.05), LAP)
    assert abs(out.values.mean() - 1.0) < 0.05
    assert trace.pattern.shape == (1, 2000)


# ---------------------------------------------------------------- shared properties

@pytest.mark.parametrize("mode", list(AttackMode))
@pytest.mark.parametrize("target", [0, 6])
def test_empty_set_is_bit_identical(weather, mode, target):
    clean, poisoned, trace = poisoned_pipeline(weather, AttackConfig(mode, target), LAP,
                                               np.random.default_rng(12))
    assert np.array_equal(clean.values, poisoned.values)
    assert trace.labels.sum() == 0


@pytest.mark.parametrize("mode", list(AttackMode))
def test_labels_match_membership(weather, mode):
    M = choose_poisoned(weather.n, 0.2, np.random.default_rng(4))
    _, _, trace = poisoned_pipeline(weather, AttackConfig(mode, 0, M), LAP, np.random.default_rng(5))
    assert set(np.flatnonzero(trace.labels)) == set(M)
    assert np.all(np.isfinite(trace.pattern))


@pytest.mark.parametrize("mode", list(AttackMode))
def test_caps_bound_pattern(weather, mode):
    cfg = AttackConfig(mode, 0, (1, 2, 3), gamma=0.3, eta=0.1, shift=0.8, drift_high=1.0)
    _, _, trace = poisoned_pipeline(weather, cfg, LAP, np.random.default_rng(6))
    assert trace.magnitude_sup <= 0.3 + 1e-12
    assert trace.variation_sup <= 0.1 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.floats(0, 1))
def test_choose_poisoned_never_below_ratio(n, ratio):
    M = choose_poisoned(n, ratio, np.random.default_rng(0))
    assert len(M) / n >= ratio - 1e-9
    assert len(set(M)) == len(M)


# ---------------------------------------------------------------- bounds

def test_correlation_bound_value():
    assert correlation_bound(0.05, 1.0, 0.5) == pytest.approx(0.05 * math.expm1(1.0) / 0.5)
    assert correlation_bound(0.05, 1.0, 0.5) == pytest.approx(0.1718, abs=1e-4)
    assert correlation_bound(0.05, 1.0, 0.0) is None


def test_identical_series_no_distortion(weather):
    configs = default_configs(weather.kinds, 1.0)
    sq = dataset_sqr_series(perturb_dataset(weather, configs, np.random.default_rng(0)), configs)
    rep = measure_distortion(sq, sq, 0, 0.0, LAP)
    assert np.all(rep.sqr_l1 == 0)
    assert all(v == 0 for v in rep.delta_rho.values())


def test_dipa_correlation_shift_within_bound():
    ds = generate_synthetic(weather_like_spec(n=56, T=288), seed=9)
    configs = default_configs(ds.kinds, 1.0)
    M = choose_poisoned(ds.n, 0.05, np.random.default_rng(1))
    clean, poisoned, _ = poisoned_pipeline(ds, AttackConfig("dipa", 0, M, shift=0.3), configs,
                                           np.random.default_rng(2))
    rep = measure_distortion(dataset_sqr_series(clean, configs), dataset_sqr_series(poisoned, configs),
                             0, len(M) / ds.n, configs[0])
    assert rep.rho_bound is not None
    assert max(rep.delta_rho.values()) <= rep.rho_bound * 1.1


def test_stealth_bound_value():
    r = verify_stealth([0.0], [0.0], ThresholdDetector(0.5), 0.1)
    assert r.bound == pytest.approx(math.exp(0.1) - 1)
    assert r.bound == pytest.approx(0.1052, abs=1e-4)


def test_identical_distributions_zero_gap():
    x = np.random.default_rng(0).normal(size=5000)
    r = verify_stealth(x, x, ThresholdDetector(0.0), 1.0)
    assert r.gap == 0.0 and r.within_bound


def test_dipa_stealth_gap_within_bound():
    rng = np.random.default_rng(7)
    N, eps = 20_000, 0.5
    cfg = LdpConfig(Mechanism.LAPLACE, eps, UNIT)
    raw = one_attr(np.full((N, 1), -0.5))
    clean = perturb_dataset(raw, [cfg], rng).values.ravel()
    shifted, _ = apply_dipa(raw, AttackConfig("dipa", 0, tuple(range(N)), shift=1.5))
    poisoned = perturb_dataset(shifted, [cfg], rng).values.ravel()
    r = verify_stealth(clean, poisoned, ThresholdDetector(0.25), eps)
    assert r.gap > 0
    assert r.gap <= r.bound + 3 * r.stderr

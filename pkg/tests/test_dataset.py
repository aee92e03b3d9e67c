import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poisonlab.dataset import (
    AttributeSpec,
    Continuous,
    Discrete,
    GeneratorSpec,
    HistoryStore,
    Provenance,
    TimeSeriesDataset,
    generate_synthetic,
    weather_like_spec,
)
from poisonlab.errors import ConfigurationError


def textbook_pearson(x, y):
    n = len(x)
    sx, sy = sum(x), sum(y)
    sxx = sum(a * a for a in x)
    syy = sum(b * b for b in y)
    sxy = sum(a * b for a, b in zip(x, y))
    return (n * sxy - sx * sy) / math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))


def test_kind_invariants():
    with pytest.raises(ConfigurationError):
        Continuous(1.0, 1.0)
    with pytest.raises(ConfigurationError):
        Continuous(0.0, math.inf)
    with pytest.raises(ConfigurationError):
        Discrete(("a",))
    with pytest.raises(ConfigurationError):
        Discrete(("a", "a"))
    assert Discrete.of_size(5).size == 5
    assert Continuous(-1, 1).size == 2


def test_weather_shape():
    ds = generate_synthetic(weather_like_spec(), seed=0)
    assert ds.values.shape == (56, 10, 288)
    assert ds.provenance is Provenance.RAW


def test_single_constant_reading():
    spec = GeneratorSpec(1, 1, (AttributeSpec("x", level=0.3, scale=0.0, noise=0.0),))
    ds = generate_synthetic(spec, seed=4)
    assert ds.values.shape == (1, 1, 1)
    assert ds.values[0, 0, 0] == 0.3


def test_requested_correlation_realized():
    attrs = (AttributeSpec("a", scale=0.3), AttributeSpec("b", scale=0.3))
    spec = GeneratorSpec(500, 1000, attrs, correlations=(("a", "b", 0.8),))
    ds = generate_synthetic(spec, seed=21)
    x = ds.values[:, 0, :].ravel()[::50].tolist()
    y = ds.values[:, 1, :].ravel()[::50].tolist()
    r = textbook_pearson(x, y)
    assert 0.65 <= r <= 0.95
    assert r == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-9)


@pytest.mark.parametrize("rho", [1.0, -1.5, float("nan")])
def test_invalid_correlation_rejected(rho):
    spec = GeneratorSpec(3, 3, (AttributeSpec("a"), AttributeSpec("b")), correlations=(("a", "b", rho),))
    with pytest.raises(ConfigurationError):
        generate_synthetic(spec, seed=0)


def test_multi_attribute_needs_correlation_pair():
    with pytest.raises(ConfigurationError):
        generate_synthetic(GeneratorSpec(3, 3, (AttributeSpec("a"), AttributeSpec("b"))), seed=0)


def test_non_finite_params_rejected():
    spec = GeneratorSpec(3, 3, (AttributeSpec("a", level=math.nan),))
    with pytest.raises(ConfigurationError):
        generate_synthetic(spec, seed=0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(1, 30))
def test_generator_deterministic_and_in_range(seed, n, T):
    spec = weather_like_spec(n=n, T=T)
    a = generate_synthetic(spec, seed)
    b = generate_synthetic(spec, seed)
    assert a == b
    for j, kind in enumerate(a.kinds):
        assert np.all(kind.contains(a.values[:, j, :]))


def test_dataset_rejects_out_of_range_raw_values():
    with pytest.raises(ConfigurationError):
        TimeSeriesDataset(("x",), (Continuous(-1, 1),), np.full((1, 1, 2), 2.0))
    with pytest.raises(ConfigurationError):
        TimeSeriesDataset(("c",), (Discrete.of_size(3),), np.full((1, 1, 2), 3.0))


def test_perturbed_continuous_values_may_leave_domain():
    ds = TimeSeriesDataset(("x",), (Continuous(-1, 1),), np.full((1, 1, 2), 5.0),
                           lineage=(Provenance.RAW, Provenance.PERTURBED))
    assert ds.provenance is Provenance.PERTURBED


def test_lineage_never_returns_to_raw():
    with pytest.raises(ConfigurationError):
        TimeSeriesDataset(("x",), (Continuous(-1, 1),), np.zeros((1, 1, 1)),
                          lineage=(Provenance.RAW, Provenance.PERTURBED, Provenance.RAW))


def test_values_are_read_only():
    ds = TimeSeriesDataset(("x",), (Continuous(-1, 1),), np.zeros((2, 1, 3)))
    with pytest.raises(ValueError):
        ds.values[0, 0, 0] = 1.0


def test_slice_and_with_values():
    ds = generate_synthetic(weather_like_spec(n=4, T=10), seed=1)
    part = ds.slice_time(2, 5)
    assert part.T == 3 and part.times == ds.times[2:5]
    np.testing.assert_array_equal(part.values, ds.values[:, :, 2:5])
    pert = ds.with_values(ds.values, Provenance.PERTURBED)
    assert pert.lineage == (Provenance.RAW, Provenance.PERTURBED)


def test_history_rejects_poisoned():
    ds = generate_synthetic(weather_like_spec(n=3, T=5), seed=2)
    poisoned = ds.with_values(ds.values, Provenance.POISONED)
    with pytest.raises(ConfigurationError):
        HistoryStore((poisoned,))
    with pytest.raises(ConfigurationError):
        HistoryStore(())
    assert HistoryStore((ds,)).names == ds.names

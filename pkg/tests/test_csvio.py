import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from poisonlab.csvio import CsvSchema, export_csv, ingest_csv
from poisonlab.dataset import Continuous, Discrete, Provenance, TimeSeriesDataset
from poisonlab.errors import ConfigurationError, MissingDataError, ParseError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_minmax_rescale(tmp_path):
    p = write(tmp_path / "a.csv", "device,time,x\nd,0,0\nd,1,5\nd,2,10\n")
    ds = ingest_csv(p, CsvSchema(rescale=True))
    np.testing.assert_array_equal(ds.values[0, 0], [-1.0, 0.0, 1.0])
    assert ds.kinds == (Continuous(-1.0, 1.0),)
    assert ds.provenance is Provenance.RAW


def test_unknown_category_names_row(tmp_path):
    p = write(tmp_path / "b.csv", "device,time,c\nd,0,sun\nd,1,hail\n")
    with pytest.raises(ParseError) as err:
        ingest_csv(p, CsvSchema(columns={"c": Discrete(("sun", "rain"))}))
    assert err.value.row == 3


def test_unparseable_number_names_row(tmp_path):
    p = write(tmp_path / "c.csv", "device,time,x\nd,0,1.0\nd,1,oops\n")
    with pytest.raises(ParseError) as err:
        ingest_csv(p)
    assert err.value.row == 3


def test_missing_cell_rejected(tmp_path):
    p = write(tmp_path / "d.csv", "device,time,x\na,0,1\na,1,2\nb,0,3\n")
    with pytest.raises(MissingDataError):
        ingest_csv(p)


def test_duplicate_cell_rejected(tmp_path):
    p = write(tmp_path / "e.csv", "device,time,x\na,0,1\na,0,2\n")
    with pytest.raises(ParseError):
        ingest_csv(p)


def test_empty_path_rejected():
    ds = TimeSeriesDataset(("x",), (Continuous(-1, 1),), np.zeros((1, 1, 1)))
    with pytest.raises(ConfigurationError):
        export_csv(ds, "")
    with pytest.raises(ConfigurationError):
        ingest_csv("")


def test_provenance_header_comment(tmp_path):
    ds = TimeSeriesDataset(("x",), (Continuous(-1, 1),), np.zeros((1, 1, 1)),
                           lineage=(Provenance.RAW, Provenance.PERTURBED))
    export_csv(ds, tmp_path / "f.csv")
    first = (tmp_path / "f.csv").read_text(encoding="utf-8").splitlines()[0]
    assert first == "# provenance: perturbed"
    assert ingest_csv(tmp_path / "f.csv").lineage == ds.lineage


def test_two_by_two_by_two_round_trip(tmp_path):
    values = np.array([[[0.1, -0.7], [0, 2]], [[1 / 3, 0.9], [1, 1]]], dtype=float)
    ds = TimeSeriesDataset(("x", "c"), (Continuous(-1, 1), Discrete(("lo", "mid", "hi"))), values,
                           device_ids=("north", "south"), times=("t0", "t1"))
    export_csv(ds, tmp_path / "g.csv")
    back = ingest_csv(tmp_path / "g.csv")
    assert back == ds
    export_csv(back, tmp_path / "h.csv")
    assert (tmp_path / "g.csv").read_bytes() == (tmp_path / "h.csv").read_bytes()


@st.composite
def datasets(draw):
    n, k, T = draw(st.integers(1, 3)), draw(st.integers(1, 3)), draw(st.integers(1, 4))
    kinds, cols = [], []
    for _ in range(k):
        if draw(st.booleans()):
            kinds.append(Continuous(-1.0, 1.0))
            cols.append(draw(st.lists(st.floats(-1, 1), min_size=n * T, max_size=n * T)))
        else:
            K = draw(st.integers(2, 4))
            kinds.append(Discrete.of_size(K))
            cols.append(draw(st.lists(st.integers(0, K - 1), min_size=n * T, max_size=n * T)))
    values = np.stack([np.array(c, dtype=float).reshape(n, T) for c in cols], axis=1)
    return TimeSeriesDataset(tuple(f"a{j}" for j in range(k)), tuple(kinds), values)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(datasets())
def test_round_trip_property(tmp_path, ds):
    export_csv(ds, tmp_path / "p.csv")
    assert ingest_csv(tmp_path / "p.csv") == ds

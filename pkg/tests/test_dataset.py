import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from galdetector.dataset import (
    DataError,
    Dataset,
    Normalizer,
    fit_normalizer,
    generate_synthetic,
    load_csv,
    split_scenario,
    write_csv,
)


@pytest.fixture
def tiny_csv(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("f1,f2,label\n0,0,0\n1,1,0\n9,9,1\n")
    return path


def test_load_with_label_column(tiny_csv):
    ds = load_csv(tiny_csv, "label")
    assert ds.n_samples == 3 and ds.n_features == 2
    assert ds.labels.tolist() == [0, 0, 1]
    assert ds.feature_names == ("f1", "f2")
    assert ds.name == "tiny"


def test_load_without_label_column_keeps_all_columns(tiny_csv):
    ds = load_csv(tiny_csv)
    assert ds.n_features == 3
    assert ds.labels is None
    assert ds.features[:, 2].tolist() == [0, 0, 1]


@pytest.mark.parametrize(
    "body,fragment",
    [
        ("a,b\n1,x\n", "row 2, column 'b'"),
        ("a,b\n1,2\n3\n", "row 3 has 1 columns"),
        ("a,label\n1,2\n", "not 0 or 1"),
        ("a,b\n1,nan\n", "non-finite"),
        ("", "empty file"),
        ("a,b\n", "no data rows"),
    ],
)
def test_load_errors_are_specific(tmp_path, body, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DataError, match=fragment):
        load_csv(path, "label" if "label" in body else None)


def test_missing_file_and_missing_label_column(tmp_path, tiny_csv):
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "nope.csv")
    with pytest.raises(DataError, match="not in header"):
        load_csv(tiny_csv, "target")


def test_dataset_rejects_bad_input():
    with pytest.raises(DataError):
        Dataset(np.array([[np.inf]]))
    with pytest.raises(DataError):
        Dataset(np.ones((2, 2)), np.array([0, 2]))
    with pytest.raises(DataError):
        Dataset(np.empty((0, 3)))


def test_dataset_arrays_are_read_only():
    ds = Dataset(np.ones((2, 2)), np.array([0, 1]))
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


@settings(max_examples=60, deadline=None)
@given(
    hnp.arrays(float, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
               elements=st.floats(-1e12, 1e12, allow_nan=False)),
    st.booleans(),
)
def test_csv_round_trip_is_bit_exact(tmp_path_factory, x, with_labels):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    labels = (np.arange(x.shape[0]) % 2) if with_labels else None
    ds = Dataset(x, labels)
    write_csv(ds, path)
    back = load_csv(path, "label" if with_labels else None)
    assert np.array_equal(back.features, ds.features)
    assert back.feature_names == ds.feature_names
    if with_labels:
        assert np.array_equal(back.labels, ds.labels)


# ---------------------------------------------------------------- normalizer

def test_normalizer_examples():
    norm = fit_normalizer(np.array([[2.0, 7.0], [4.0, 7.0], [6.0, 7.0]]))
    assert norm.mins.tolist() == [2.0, 7.0] and norm.maxs.tolist() == [6.0, 7.0]
    out = norm.apply(np.array([[4.0, 7.0], [10.0, 1.0], [-3.0, 99.0]]))
    assert out.tolist() == [[0.5, 0.5], [1.0, 0.5], [0.0, 0.5]]


def test_normalizer_uses_only_fit_indices():
    x = np.array([[0.0], [10.0], [5.0], [100.0]])
    norm = fit_normalizer(x, np.array([0, 1]))
    assert norm.maxs[0] == 10.0
    assert norm.apply(x)[:, 0].tolist() == [0.0, 1.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        fit_normalizer(x, np.array([], dtype=int))


def test_normalizer_round_trip():
    norm = fit_normalizer(np.random.default_rng(0).normal(size=(10, 3)))
    again = Normalizer.from_dict(norm.to_dict())
    probe = np.random.default_rng(1).normal(size=(5, 3))
    assert np.array_equal(norm.apply(probe), again.apply(probe))


@settings(max_examples=200, deadline=None)
@given(
    hnp.arrays(float, (5, 3), elements=st.floats(-1e6, 1e6)),
    hnp.arrays(float, (7, 3), elements=st.floats(-1e9, 1e9)),
)
def test_normalizer_output_in_unit_interval(fit, probe):
    out = fit_normalizer(fit).apply(probe)
    assert np.all((out >= 0.0) & (out <= 1.0))


# ---------------------------------------------------------------- split

def _ten_rows():
    return Dataset(np.arange(20.0).reshape(10, 2), np.array([0] * 8 + [1] * 2))


def test_full_observation_split():
    sp = split_scenario(_ten_rows(), seed=0, train_frac=0.8, observed_normal_frac=1.0)
    ds = _ten_rows()
    assert sp.test.size == 2
    train_normals = [i for i in sp.train_pool if ds.labels[i] == 0]
    assert sp.observed_normals.tolist() == train_normals


def test_partial_observation_split_count():
    ds = _ten_rows()
    sp = split_scenario(ds, seed=1, train_frac=0.8, observed_normal_frac=0.25)
    n_train_normals = int((ds.labels[sp.train_pool] == 0).sum())
    assert sp.observed_normals.size == round(0.25 * n_train_normals)
    sp.validate(ds)


def test_split_is_deterministic():
    ds = _ten_rows()
    a, b = split_scenario(ds, 5), split_scenario(ds, 5)
    assert a.to_dict() == b.to_dict()


def test_split_errors():
    with pytest.raises(ValueError, match="no normal"):
        split_scenario(Dataset(np.ones((4, 1)), np.ones(4, dtype=int)), 0)
    with pytest.raises(ValueError):
        split_scenario(Dataset(np.ones((4, 1))), 0)
    with pytest.raises(ValueError):
        split_scenario(_ten_rows(), 0, train_frac=1.0)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.integers(0, 1), min_size=2, max_size=60),
    st.integers(0, 2**32 - 1),
    st.floats(0.05, 0.95),
    st.floats(0.01, 1.0),
)
def test_split_partition_property(labels, seed, train_frac, obs_frac):
    y = np.array(labels)
    ds = Dataset(np.zeros((y.size, 1)), y)
    try:
        sp = split_scenario(ds, seed, train_frac, obs_frac)
    except ValueError:
        n_train = max(int(round(train_frac * y.size)), 1)
        assert n_train >= 1  # only a normal-free training pool may fail
        return
    parts = [set(sp.observed_normals), set(sp.unlabeled), set(sp.test)]
    assert not (parts[0] & parts[1]) and not (parts[0] & parts[2]) and not (parts[1] & parts[2])
    assert set().union(*parts) == set(range(y.size))
    assert np.all(y[sp.observed_normals] == 0)
    assert sp.observed_normals.size >= 1


# ---------------------------------------------------------------- synthetic

def test_synthetic_counts():
    ds = generate_synthetic(100, 0, 2, seed=0)
    assert ds.n_samples == 100 and ds.labels.sum() == 0
    ds = generate_synthetic(100, 10, 2, seed=0)
    assert ds.n_samples == 110 and ds.labels.sum() == 10
    assert np.all((ds.features >= 0) & (ds.features <= 1))


def test_synthetic_anomalies_respect_margin():
    ds, centers = generate_synthetic(200, 30, 3, seed=4, margin=0.25, return_centers=True)
    for row in ds.features[ds.labels == 1]:
        nearest = min(float(np.sqrt(((row - c) ** 2).sum())) for c in centers)
        assert nearest >= 0.25


def test_synthetic_infeasible_margin_errors():
    with pytest.raises(ValueError, match="could not place"):
        generate_synthetic(10, 5, 2, seed=0, margin=5.0, max_tries=3)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from udelab.datagen import (
    INNER_RADIUS,
    OUTER_RADIUS,
    DataError,
    Dataset,
    concat_datasets,
    generate_circles,
    load_csv,
    save_csv,
    shift,
    split,
    to_csv_text,
)


def test_class_counts_are_exact():
    ds = generate_circles(100, 300, 0.05, seed=1)
    assert ds.n == 400 and ds.d == 2 and ds.k == 2
    assert (ds.labels == 1).sum() == 100
    assert (ds.labels == 0).sum() == 300


def test_zero_noise_puts_points_on_exact_radii():
    ds = generate_circles(50, 70, 0.0, seed=2)
    r = np.linalg.norm(ds.features, axis=1)
    np.testing.assert_allclose(r[ds.labels == 1], INNER_RADIUS, atol=1e-12)
    np.testing.assert_allclose(r[ds.labels == 0], OUTER_RADIUS, atol=1e-12)


def test_radius_threshold_separates_noise_free_classes():
    ds = generate_circles(100, 300, 0.0, seed=3)
    r = np.linalg.norm(ds.features, axis=1)
    pred = (r < (INNER_RADIUS + OUTER_RADIUS) / 2).astype(int)
    assert np.all(pred == ds.labels)


def test_same_seed_same_data():
    assert generate_circles(10, 20, 0.1, seed=7) == generate_circles(10, 20, 0.1, seed=7)
    assert generate_circles(10, 20, 0.1, seed=7) != generate_circles(10, 20, 0.1, seed=8)


@pytest.mark.parametrize("kwargs", [dict(n_pos=0, n_neg=3), dict(n_pos=3, n_neg=3, noise_sd=-0.1)])
def test_generator_preconditions(kwargs):
    with pytest.raises(DataError):
        generate_circles(**kwargs)


def test_shift_moves_column_mean_by_dx():
    ds = generate_circles(100, 300, 0.05, seed=4)
    moved = shift(ds, 0.4)
    assert moved.features[:, 0].mean() - ds.features[:, 0].mean() == pytest.approx(0.4, abs=1e-12)
    np.testing.assert_array_equal(moved.features[:, 1], ds.features[:, 1])
    assert moved.labels is None


def test_shift_zero_with_labels_is_identity():
    ds = generate_circles(5, 5, 0.1, seed=5)
    assert shift(ds, 0.0, keep_labels=True) == ds


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5, allow_nan=False), st.integers(0, 2**31))
def test_shift_inverse(a, seed):
    ds = generate_circles(4, 6, 0.1, seed=seed)
    back = shift(shift(ds, a, keep_labels=True), -a, keep_labels=True)
    np.testing.assert_allclose(back.features, ds.features, rtol=0, atol=1e-12)


def test_split_sizes_and_stratification():
    ds = generate_circles(100, 300, 0.05, seed=6)
    tr, te = split(ds, 0.5, seed=0)
    assert tr.n == te.n == 200
    assert (tr.labels == 1).sum() == 50 and (te.labels == 1).sum() == 50


def _rows(ds):
    return sorted(map(tuple, np.column_stack([ds.features, ds.labels])))


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 30),
    st.integers(2, 30),
    st.floats(0.05, 0.95),
    st.integers(0, 2**31),
)
def test_split_is_a_partition(n_pos, n_neg, frac, seed):
    ds = generate_circles(n_pos, n_neg, 0.1, seed=seed)
    tr, te = split(ds, frac, seed=seed)
    assert tr.n + te.n == ds.n
    assert _rows(concat_datasets([tr, te])) == _rows(ds)
    assert set(map(tuple, tr.features)).isdisjoint(map(tuple, te.features))


def test_split_determinism():
    ds = generate_circles(30, 40, 0.1, seed=0)
    assert split(ds, 0.5, seed=9)[0] == split(ds, 0.5, seed=9)[0]


def test_split_needs_two_per_class():
    ds = Dataset(np.zeros((3, 2)), [0, 0, 1], "source")
    with pytest.raises(DataError, match="class 1"):
        split(ds, 0.5)


def test_csv_round_trip(tmp_path):
    ds = generate_circles(20, 30, 0.1, seed=11)
    save_csv(ds, tmp_path / "d.csv")
    assert load_csv(tmp_path / "d.csv") == ds


def test_csv_round_trip_unlabeled(tmp_path):
    ds = shift(generate_circles(5, 5, 0.1, seed=1), 0.4, domain="target")
    save_csv(ds, tmp_path / "t.csv")
    back = load_csv(tmp_path / "t.csv")
    assert back.labels is None and back == ds


def test_csv_format(tmp_path):
    text = to_csv_text(Dataset(np.array([[0.1, 2.0]]), [1], "source"))
    assert text == "x0,x1,label,domain\n0.10000000000000001,2,1,source\n"


def test_csv_missing_label_column(tmp_path):
    path = tmp_path / "nolabel.csv"
    path.write_text("x0,x1,domain\n1.0,2.0,target\n3.0,4.0,target\n")
    ds = load_csv(path)
    assert ds.labels is None and ds.n == 2


def test_csv_non_numeric_cell_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x0,x1,label,domain\n1.0,2.0,0,source\n1.0,abc,1,source\n")
    with pytest.raises(DataError, match=":3:"):
        load_csv(path)


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), [0, 2], "source", k=2)
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan, 0.0]]), None, "source")

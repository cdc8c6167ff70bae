import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lamc.data import (
    MultiLabelDataset,
    SinglePositiveView,
    SplitSpec,
    generate_synthetic,
    load_dataset,
    project_single_positive,
    save_dataset,
    split,
)
from lamc.exceptions import ConfigurationError, DatasetError, EmptyViewError, ParseError


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoad:
    def test_small_file(self, tmp_path):
        p = _write(tmp_path, "#labels=2\n0.5,1.0,1,0\n-2,3e-1,0,1\n4,5,1,1\n")
        ds = load_dataset(p)
        assert (ds.n_instances, ds.n_features, ds.n_labels) == (3, 2, 2)
        np.testing.assert_array_equal(ds.features, [[0.5, 1.0], [-2, 0.3], [4, 5]])
        np.testing.assert_array_equal(ds.labels, [[1, 0], [0, 1], [1, 1]])

    def test_label_value_two(self, tmp_path):
        p = _write(tmp_path, "#labels=2\n0.5,1.0,1,0\n1,2,2,0\n")
        with pytest.raises(DatasetError, match=r"line 3.*label column 0.*'2'"):
            load_dataset(p)

    def test_empty_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_dataset(_write(tmp_path, ""))

    def test_ragged_row_reports_line(self, tmp_path):
        p = _write(tmp_path, "#labels=2\n0.5,1.0,1,0\n1,2,0\n")
        with pytest.raises(ParseError) as exc:
            load_dataset(p)
        assert exc.value.line == 3

    def test_bad_float(self, tmp_path):
        with pytest.raises(ParseError, match="line 2"):
            load_dataset(_write(tmp_path, "#labels=2\nabc,1,0\n"))

    def test_non_finite_feature(self, tmp_path):
        with pytest.raises(DatasetError, match="non-finite"):
            load_dataset(_write(tmp_path, "#labels=2\nnan,1,0\n"))

    def test_missing_header(self, tmp_path):
        with pytest.raises(ParseError, match="header"):
            load_dataset(_write(tmp_path, "1,2,1,0\n"))

    def test_header_only(self, tmp_path):
        with pytest.raises(ParseError):
            load_dataset(_write(tmp_path, "#labels=2\n"))


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 12),
    d=st.integers(1, 4),
    k=st.integers(2, 5),
    data=st.data(),
)
def test_save_load_round_trip(tmp_path_factory, n, d, k, data):
    X = data.draw(arrays(np.float64, (n, d), elements=st.floats(-1e300, 1e300, allow_subnormal=True)))
    Y = data.draw(arrays(np.int8, (n, k), elements=st.integers(0, 1)))
    ds = MultiLabelDataset(X, Y)
    p = tmp_path_factory.mktemp("rt") / "ds.csv"
    save_dataset(ds, p)
    back = load_dataset(p)
    assert back == ds
    assert back.features.tobytes() == ds.features.tobytes()


class TestDatasetInvariants:
    def test_rejects_non_binary(self):
        with pytest.raises(DatasetError):
            MultiLabelDataset(np.zeros((2, 2)), [[0, 2], [1, 0]])

    def test_rejects_inf(self):
        with pytest.raises(DatasetError):
            MultiLabelDataset([[np.inf, 0.0]], [[0, 1]])

    def test_needs_two_labels(self):
        with pytest.raises(DatasetError):
            MultiLabelDataset(np.zeros((2, 2)), [[1], [0]])

    def test_read_only(self):
        ds = MultiLabelDataset(np.zeros((2, 2)), [[0, 1], [1, 0]])
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0


class TestSplit:
    def test_sizes_n10(self):
        ds = generate_synthetic(10, 3, 3, 1.5, seed=0)
        sp = split(ds, SplitSpec(0.7, 0.1, 0.1, 0.1, seed=0))
        assert [len(s) for s in (sp.train, sp.cal, sp.val, sp.test)] == [7, 1, 1, 1]

    def test_remainder_goes_to_train(self):
        ds = generate_synthetic(13, 3, 3, 1.5, seed=0)
        sp = split(ds, SplitSpec(0.7, 0.1, 0.1, 0.1, seed=0))
        assert [len(s) for s in (sp.train, sp.cal, sp.val, sp.test)] == [10, 1, 1, 1]

    def test_deterministic(self):
        ds = generate_synthetic(50, 3, 3, 1.5, seed=0)
        a = split(ds, SplitSpec(seed=4))
        b = split(ds, SplitSpec(seed=4))
        for name in ("train", "cal", "val", "test"):
            np.testing.assert_array_equal(a.indices[name], b.indices[name])
            assert getattr(a, name) == getattr(b, name)

    def test_seed_changes_assignment_not_sizes(self):
        ds = generate_synthetic(100, 3, 3, 1.5, seed=0)
        a = split(ds, SplitSpec(seed=0))
        b = split(ds, SplitSpec(seed=1))
        assert [a.indices[k].size for k in a.indices] == [b.indices[k].size for k in b.indices]
        assert not np.array_equal(a.indices["test"], b.indices["test"])

    def test_zero_cal_fraction(self):
        ds = generate_synthetic(20, 3, 3, 1.5, seed=0)
        sp = split(ds, SplitSpec(0.8, 0.0, 0.1, 0.1))
        assert sp.cal is None and len(sp.train) == 16

    def test_nonzero_fraction_with_no_rows(self):
        ds = generate_synthetic(5, 3, 3, 1.5, seed=0)
        with pytest.raises(ConfigurationError, match="yields 0"):
            split(ds, SplitSpec(0.7, 0.1, 0.1, 0.1))

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigurationError):
            SplitSpec(0.7, 0.1, 0.1, 0.2)
        with pytest.raises(ConfigurationError):
            SplitSpec(1.1, -0.1, 0.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(10, 400), seed=st.integers(0, 2**63 - 1))
def test_split_is_a_partition(n, seed):
    ds = MultiLabelDataset(np.arange(n, dtype=float)[:, None], np.tile([1, 0], (n, 1)))
    sp = split(ds, SplitSpec(seed=seed))
    rows = np.concatenate([sp.indices[k] for k in ("train", "cal", "val", "test")])
    assert np.array_equal(np.sort(rows), np.arange(n))
    # features encode the row index, so the subsets really are those rows
    for k in ("train", "cal", "val", "test"):
        np.testing.assert_array_equal(getattr(sp, k).features[:, 0], sp.indices[k])


class TestProjection:
    def test_single_positive_is_forced(self):
        ds = MultiLabelDataset(np.zeros((1, 1)), [[1, 0, 0]])
        for seed in range(20):
            assert project_single_positive(ds, seed).positive_index[0] == 0

    def test_uniform_choice_frequency(self):
        ds = MultiLabelDataset(np.zeros((10_000, 1)), np.tile([1, 1, 0], (10_000, 1)))
        view = project_single_positive(ds, seed=123)
        freq = np.mean(view.positive_index == 0)
        assert abs(freq - 0.5) < 0.05
        assert set(np.unique(view.positive_index)) == {0, 1}

    def test_uniform_over_seeds(self):
        ds = MultiLabelDataset(np.zeros((1, 1)), [[1, 1, 0]])
        picks = [project_single_positive(ds, s).positive_index[0] for s in range(10_000)]
        assert abs(np.mean(np.array(picks) == 0) - 0.5) < 0.05

    def test_zero_positive_rows_dropped(self):
        ds = MultiLabelDataset(np.arange(3.0)[:, None], [[0, 0, 0], [0, 1, 0], [0, 0, 0]])
        view = project_single_positive(ds, 0)
        assert view.n_dropped == 2 and len(view) == 1
        assert view.base.features[0, 0] == 1.0 and view.positive_index[0] == 1

    def test_all_zero_raises(self):
        ds = MultiLabelDataset(np.zeros((2, 1)), [[0, 0], [0, 0]])
        with pytest.raises(EmptyViewError):
            project_single_positive(ds, 0)

    def test_view_validates_choice(self):
        ds = MultiLabelDataset(np.zeros((1, 1)), [[1, 0]])
        with pytest.raises(DatasetError):
            SinglePositiveView(ds, [1])


@settings(max_examples=100, deadline=None)
@given(
    Y=arrays(np.int8, st.tuples(st.integers(1, 30), st.integers(2, 6)), elements=st.integers(0, 1)),
    seed=st.integers(0, 2**32),
)
def test_projection_never_picks_a_negative(Y, seed):
    if not Y.any():
        return
    ds = MultiLabelDataset(np.zeros((Y.shape[0], 1)), Y)
    view = project_single_positive(ds, seed)
    assert (view.base.labels[np.arange(len(view)), view.positive_index] == 1).all()
    assert len(view) + view.n_dropped == Y.shape[0]


class TestSynthetic:
    def test_cardinality(self):
        ds = generate_synthetic(1000, 10, 5, cardinality=2.0, noise=0.0, seed=0)
        assert 1.8 <= ds.cardinality() <= 2.2
        assert ds.labels.sum(axis=1).min() >= 1

    def test_bit_identical(self):
        a = generate_synthetic(200, 7, 4, 2.0, 0.3, seed=9)
        b = generate_synthetic(200, 7, 4, 2.0, 0.3, seed=9)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_cardinality_above_k(self):
        with pytest.raises(ConfigurationError):
            generate_synthetic(10, 2, 3, cardinality=4.0)

    def test_noise_range(self):
        with pytest.raises(ConfigurationError):
            generate_synthetic(10, 2, 3, cardinality=1.0, noise=1.0)

    @pytest.mark.parametrize("card", [1.0, 3.0])
    def test_extreme_cardinalities(self, card):
        ds = generate_synthetic(500, 4, 3, cardinality=card, seed=1)
        assert abs(ds.cardinality() - card) < 0.15


def test_clean_synthetic_data_is_learnable():
    from lamc.metrics import average_precision
    from lamc.nn import AdamState, LossKind, init_mlp, train

    ds = generate_synthetic(1000, 20, 5, cardinality=2.0, noise=0.0, seed=0, separation=5.0)
    sp = split(ds, SplitSpec(0.8, 0.0, 0.1, 0.1, seed=0))
    view = project_single_positive(sp.train, 0)
    model, _ = train(init_mlp(20, 5, 64, seed=0), view, LossKind("bce"), AdamState(1e-2), epochs=20)
    assert average_precision(model(sp.test.features), sp.test.labels) > 0.9

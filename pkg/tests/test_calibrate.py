
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from lamc.calibrate import (
    ACCEPT_ALL,
    ThresholdVector,
    calibrate,
    calibrate_scores,
    class_score_sets,
    collect_scores,
    filter_predictions,
    masked_scores,
    quantile_index,
    quantile_threshold,
)
from lamc.data import MultiLabelDataset
from lamc.exceptions import ConfigurationError, ShapeError
from lamc.nn import forward, init_mlp


def _constant(value, k):
    return lambda X: np.full((len(X), k), value)


class TestQuantile:
    def test_tenths_alpha_half(self):
        S = [0.1 * i for i in range(1, 11)]
        assert quantile_index(10, 0.5) == 6
        assert quantile_threshold(S, 0.5) == S[5]

    def test_unordered_input(self):
        S = [0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.4, 0.6, 1.0, 0.8]
        assert quantile_threshold(S, 0.5) == 0.6

    @pytest.mark.parametrize("alpha", [0.01, 0.5, 0.99])
    def test_singleton(self, alpha):
        assert quantile_threshold([0.7], alpha) == 0.7

    def test_empty_is_accept_all(self):
        assert quantile_threshold([], 0.5) == ACCEPT_ALL

    def test_alpha_near_one_clamps_to_min(self):
        S = np.linspace(0.05, 0.95, 10)
        assert quantile_index(10, 0.95) == 1
        assert quantile_threshold(S, 0.95) == S.min()

    def test_small_alpha_clamps_to_max(self):
        assert quantile_index(10, 0.01) == 10
        assert quantile_threshold([0.2, 0.4, 0.1], 0.01) == 0.4

    def test_ties_kept(self):
        assert quantile_threshold([0.5, 0.5, 0.5, 0.2], 0.5) == 0.5

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ConfigurationError):
            quantile_threshold([0.1], alpha)


@settings(max_examples=300, deadline=None)
@given(
    S=st.lists(st.floats(0, 1), max_size=40),
    alpha=st.floats(0.001, 0.999),
)
def test_quantile_matches_sort_oracle(S, alpha):
    expected = oracles.quantile_by_sorting(S, alpha)
    got = quantile_threshold(S, alpha)
    assert got == (ACCEPT_ALL if expected is None else expected)


@settings(max_examples=200, deadline=None)
@given(
    S=st.lists(st.floats(0, 1), min_size=1, max_size=30),
    a=st.floats(0.001, 0.999),
    b=st.floats(0.001, 0.999),
)
def test_threshold_nonincreasing_in_alpha(S, a, b):
    lo, hi = sorted((a, b))
    assert quantile_threshold(S, hi) <= quantile_threshold(S, lo)


@settings(max_examples=200, deadline=None)
@given(
    S=st.lists(st.floats(0.01, 1), min_size=1, max_size=30),
    alpha=st.floats(0.001, 0.999),
)
def test_adding_a_low_score_follows_order_statistic(S, alpha):
    low = min(S) / 2
    got = quantile_threshold(S + [low], alpha)
    assert got == oracles.quantile_by_sorting(S + [low], alpha)
    # one extra score below all others can only move the threshold down or keep it
    assert got <= max(S)


def test_exchangeability_rate():
    """P(fresh score > threshold) = (n + 1 - k) / (n + 1) for continuous i.i.d. scores."""
    rng = np.random.default_rng(2024)
    trials, n, alpha = 100_000, 10, 0.5
    cal = rng.random((trials, n))
    k = quantile_index(n, alpha)
    q = np.sort(cal, axis=1)[:, k - 1]
    rate = np.mean(rng.random(trials) > q)
    assert k == 6
    assert abs(rate - 5 / 11) < 0.02


class TestCollect:
    def _cal(self):
        X = np.arange(8, dtype=float)[:, None]
        Y = np.array([[1, 0, 0]] * 3 + [[0, 1, 0]] * 3 + [[1, 1, 0]] * 2)
        return MultiLabelDataset(X, Y)

    def test_definitional(self):
        cal = self._cal()
        model = init_mlp(1, 3, 4, seed=0)
        sets, counts = collect_scores(model, cal)
        np.testing.assert_array_equal(counts, [5, 5, 0])
        rows = np.flatnonzero(cal.labels[:, 1])
        np.testing.assert_array_equal(sets[1], [forward(model, cal.features[j])[1] for j in rows])
        assert sets[2].size == 0

    def test_cap_is_seeded_subset(self):
        rng = np.random.default_rng(0)
        S = rng.random((60, 2))
        Y = np.zeros((60, 2), dtype=int)
        Y[:25, 0] = 1
        Y[:, 1] = 1
        a = class_score_sets(S, Y, per_label_cap=10, seed=3)
        b = class_score_sets(S, Y, per_label_cap=10, seed=3)
        c = class_score_sets(S, Y, per_label_cap=10, seed=4)
        assert a[0].size == 10 and a[1].size == 10
        np.testing.assert_array_equal(a[0], b[0])
        assert not np.array_equal(a[0], c[0])
        assert set(a[0]) <= set(S[:25, 0])

    def test_caps_are_nested(self):
        rng = np.random.default_rng(1)
        S = rng.random((100, 3))
        Y = (rng.random((100, 3)) < 0.5).astype(int)
        small = class_score_sets(S, Y, 5, seed=2)
        big = class_score_sets(S, Y, 20, seed=2)
        for s, b in zip(small, big):
            np.testing.assert_array_equal(s, b[:5])

    def test_cap_larger_than_available(self):
        S = np.array([[0.2, 0.1], [0.4, 0.3]])
        Y = np.array([[1, 0], [1, 1]])
        sets = class_score_sets(S, Y, per_label_cap=10)
        assert [s.size for s in sets] == [2, 1]

    def test_bad_cap(self):
        with pytest.raises(ConfigurationError):
            class_score_sets(np.zeros((2, 2)), np.ones((2, 2)), per_label_cap=0)


class TestCalibrate:
    def test_constant_model(self):
        cal = MultiLabelDataset(np.zeros((6, 2)), [[1, 0, 0], [0, 1, 0], [1, 1, 0]] * 2)
        with pytest.warns(RuntimeWarning, match="no calibration positives"):
            th = calibrate(_constant(0.5, 3), cal, alpha=0.5)
        assert th.q[0] == 0.5 and th.q[1] == 0.5
        assert th.q[2] == ACCEPT_ALL
        np.testing.assert_array_equal(th.per_class_n, [4, 4, 0])
        np.testing.assert_array_equal(th.per_class_k, [3, 3, 0])

    def test_alpha_near_one_gives_min(self):
        rng = np.random.default_rng(0)
        S = rng.random((10, 2))
        th = calibrate_scores(S, np.ones((10, 2)), alpha=0.99)
        np.testing.assert_array_equal(th.q, S.min(axis=0))

    def test_matches_per_class_oracle(self):
        rng = np.random.default_rng(11)
        S = rng.random((300, 3))
        Y = (rng.random((300, 3)) < 0.3).astype(int)
        for alpha in (0.1, 0.5, 0.8):
            th = calibrate_scores(S, Y, alpha)
            for i in range(3):
                assert th.q[i] == oracles.quantile_by_sorting(S[Y[:, i] == 1, i], alpha)

    def test_model_agnostic(self):
        cal = MultiLabelDataset(np.arange(4.0)[:, None], [[1, 0], [0, 1], [1, 1], [1, 0]])
        stub = lambda X: np.column_stack([X[:, 0] / 10, 1 - X[:, 0] / 10])
        th = calibrate(stub, cal, alpha=0.5)
        # class 0 positives score 0.0, 0.2, 0.3; k = ceil(0.5 * 4) = 2
        assert th.q[0] == 0.2

    def test_text_round_trip(self):
        th = ThresholdVector([0.25, ACCEPT_ALL, 1 / 3], 0.5, [10, 0, 7], [6, 0, 4], ("a", "b", "c"))
        text = th.to_text()
        assert "b\t0\t0\tACCEPT_ALL" in text
        back = ThresholdVector.from_text(text)
        assert back == th and back.label_names == ("a", "b", "c")
        assert back.q[2] == 1 / 3

    def test_records(self):
        th = ThresholdVector([0.25, ACCEPT_ALL], 0.5, [10, 0], [6, 0])
        assert th.records() == [
            {"label_name": "label0", "n_cal": 10, "k": 6, "q": 0.25},
            {"label_name": "label1", "n_cal": 0, "k": 0, "q": "ACCEPT_ALL"},
        ]


class TestFilter:
    def _th(self, q):
        q = np.asarray(q, dtype=float)
        return ThresholdVector(q, 0.5, np.ones(q.size), np.ones(q.size))

    def test_direct_comparison(self):
        fp = filter_predictions(self._th([0.6, 0.2]), [0.7, 0.1])
        np.testing.assert_array_equal(fp.accepted, [True, False])

    def test_equal_score_is_rejected(self):
        fp = filter_predictions(self._th([0.6, 0.2]), [0.6, 0.2])
        assert not fp.accepted.any()

    def test_accept_all(self):
        th = ThresholdVector.accepting_all(3)
        fp = filter_predictions(th, [0.0, 0.5, 1.0])
        assert fp.accepted.all()
        np.testing.assert_array_equal(masked_scores(fp), [0.0, 0.5, 1.0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            filter_predictions(self._th([0.5, 0.5]), [0.1, 0.2, 0.3])

    def test_batch(self):
        fp = filter_predictions(self._th([0.5, 0.1]), [[0.6, 0.1], [0.4, 0.2]])
        np.testing.assert_array_equal(fp.accepted, [[True, False], [False, True]])


class TestMasked:
    def test_all_accepted_identity(self):
        fp = filter_predictions(ThresholdVector.accepting_all(2), [0.3, 0.9])
        np.testing.assert_array_equal(masked_scores(fp), [0.3, 0.9])

    def test_all_rejected_zero(self):
        th = ThresholdVector([1.0, 1.0], 0.5, [1, 1], [1, 1])
        np.testing.assert_array_equal(masked_scores(filter_predictions(th, [0.3, 0.9])), [0.0, 0.0])

    def test_mixed(self):
        th = ThresholdVector([0.5, 0.5], 0.5, [1, 1], [1, 1])
        np.testing.assert_array_equal(masked_scores(filter_predictions(th, [0.7, 0.4])), [0.7, 0.0])


@settings(max_examples=200, deadline=None)
@given(
    q=st.lists(st.floats(0, 1), min_size=1, max_size=8),
    data=st.data(),
)
def test_filter_idempotent_on_masked(q, data):
    s = data.draw(st.lists(st.floats(0, 1), min_size=len(q), max_size=len(q)))
    th = ThresholdVector(q, 0.5, np.ones(len(q)), np.ones(len(q)))
    fp = filter_predictions(th, s)
    again = filter_predictions(th, masked_scores(fp))
    np.testing.assert_array_equal(again.accepted, fp.accepted)
    for acc, sc, qq in zip(fp.accepted, s, q):
        assert acc == (sc > qq)

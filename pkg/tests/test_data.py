import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samba.data import (
    FeatureFrame,
    InsufficientDataError,
    MinMaxScaler,
    Sample,
    SchemaError,
    SplitSpec,
    compute_return_targets,
    load_feature_csv,
    scaler_apply,
    scaler_fit,
    split_chronological,
    window_dataset,
)


def write_csv(path, rows, header="Date,Close,f1,f2"):
    path.write_text("\n".join([header] + rows) + "\n")
    return path


GOOD_ROWS = [
    "2020-01-01,100,1.0,5.0",
    "2020-01-02,101,2.0,4.0",
    "2020-01-03,102,3.0,3.0",
    "2020-01-06,103,4.0,2.0",
    "2020-01-07,104,5.0,1.0",
]


def make_frame(t=10, n=3, seed=0):
    rng = np.random.default_rng(seed)
    return FeatureFrame(
        dates=[f"2020-{1 + d // 28:02d}-{1 + d % 28:02d}" for d in range(t)],
        features=rng.normal(size=(t, n)),
        close=100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, size=t))),
        feature_names=[f"f{i}" for i in range(n)],
    )


class TestLoadFeatureCsv:
    def test_clean_file(self, tmp_path):
        frame = load_feature_csv(write_csv(tmp_path / "a.csv", GOOD_ROWS))
        assert frame.n_days == 5
        assert frame.dropped_rows == 0
        assert frame.feature_names == ["f1", "f2"]
        assert frame.n_features == 2

    def test_blank_cell_dropped_and_counted(self, tmp_path):
        rows = GOOD_ROWS[:2] + ["2020-01-03,102,,3.0"] + GOOD_ROWS[3:]
        frame = load_feature_csv(write_csv(tmp_path / "a.csv", rows))
        assert frame.n_days == 4
        assert frame.dropped_rows == 1

    def test_unparseable_cell_dropped(self, tmp_path):
        rows = GOOD_ROWS[:4] + ["2020-01-07,104,oops,1.0"]
        frame = load_feature_csv(write_csv(tmp_path / "a.csv", rows))
        assert frame.n_days == 4
        assert frame.dropped_rows == 1

    def test_shuffled_dates_sorted(self, tmp_path):
        frame = load_feature_csv(write_csv(tmp_path / "a.csv", GOOD_ROWS[::-1]))
        assert frame.dates == sorted(frame.dates)
        assert frame.close[0] == 100.0

    def test_missing_close_column(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ["2020-01-01,1.0,2.0"], header="Date,f1,f2")
        with pytest.raises(SchemaError, match="Close"):
            load_feature_csv(path)

    def test_missing_date_column(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ["100,1.0,2.0"], header="Close,f1,f2")
        with pytest.raises(SchemaError, match="Date"):
            load_feature_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_feature_csv(tmp_path / "nope.csv")

    def test_min_rows_enforced(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", GOOD_ROWS)
        with pytest.raises(InsufficientDataError):
            load_feature_csv(path, min_rows=7)

    def test_nonpositive_close_dropped(self, tmp_path):
        rows = GOOD_ROWS[:3] + ["2020-01-06,-3,4.0,2.0", GOOD_ROWS[4]]
        frame = load_feature_csv(write_csv(tmp_path / "a.csv", rows))
        assert frame.n_days == 4
        assert frame.dropped_rows == 1


class TestReturnTargets:
    def test_one_percent(self):
        assert compute_return_targets(np.array([100.0, 101.0])) == pytest.approx([0.01])

    def test_constant_price(self):
        assert np.all(compute_return_targets(np.full(5, 42.0)) == 0.0)

    def test_halving(self):
        assert compute_return_targets(np.array([100.0, 50.0])) == pytest.approx([-0.5])

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            compute_return_targets(np.array([100.0, 0.0]))


class TestWindowDataset:
    def test_count_ten_days(self):
        samples = window_dataset(make_frame(t=10), 5)
        assert len(samples) == 5

    def test_boundary_single_sample(self):
        assert len(window_dataset(make_frame(t=6), 5)) == 1

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            window_dataset(make_frame(t=5), 5)

    def test_window_strictly_before_target(self):
        frame = make_frame(t=8)
        for s in window_dataset(frame, 3):
            assert np.array_equal(
                s.window, frame.features[s.target_date - 3 : s.target_date]
            )
            r = compute_return_targets(frame.close)
            assert s.target == pytest.approx(r[s.target_date - 1])

    @given(st.integers(6, 40), st.integers(1, 5))
    @settings(max_examples=25, deadline=None)
    def test_count_identity(self, t, window):
        if t < window + 1:
            return
        assert len(window_dataset(make_frame(t=t), window)) == t - window


class TestSplit:
    def test_hundred_samples(self):
        samples = window_dataset(make_frame(t=105), 5)
        tr, va, te = split_chronological(samples, SplitSpec())
        assert (len(tr), len(va), len(te)) == (80, 5, 15)

    def test_twenty_samples(self):
        samples = window_dataset(make_frame(t=25), 5)
        tr, va, te = split_chronological(samples, SplitSpec())
        assert (len(tr), len(va), len(te)) == (16, 1, 3)

    def test_order_and_disjointness(self):
        samples = window_dataset(make_frame(t=40), 5)
        tr, va, te = split_chronological(samples, SplitSpec())
        rebuilt = [s.target_date for s in tr + va + te]
        assert rebuilt == [s.target_date for s in samples]
        assert max(s.target_date for s in tr) < min(s.target_date for s in va)
        assert max(s.target_date for s in va) < min(s.target_date for s in te)

    def test_empty_rejected(self):
        with pytest.raises(InsufficientDataError):
            split_chronological([], SplitSpec())

    def test_bad_fractions_rejected(self):
        with pytest.raises(ValueError):
            SplitSpec(0.5, 0.1, 0.1)


class TestMinMaxScaler:
    def sample_of(self, rows):
        return Sample(window=np.array(rows, dtype=float), target=0.0, target_date=9)

    def test_unit_interval_mapping(self):
        scaler = scaler_fit([self.sample_of([[2.0], [3.0], [4.0]])])
        out = scaler.transform_array(np.array([[2.0], [3.0], [4.0]]))
        assert np.allclose(out[:, 0], [0.0, 0.5, 1.0])

    def test_degenerate_feature_maps_to_zero(self):
        scaler = scaler_fit([self.sample_of([[7.0, 1.0], [7.0, 2.0]])])
        assert scaler.degenerate[0] and not scaler.degenerate[1]
        out = scaler.transform_array(np.array([[7.0, 1.5]]))
        assert out[0, 0] == 0.0

    def test_out_of_range_unclamped(self):
        scaler = scaler_fit([self.sample_of([[2.0], [4.0]])])
        assert scaler.transform_array(np.array([[5.0]]))[0, 0] == pytest.approx(1.5)

    def test_apply_before_fit_rejected(self):
        with pytest.raises(RuntimeError):
            MinMaxScaler().transform_array(np.zeros((1, 1)))

    def test_train_roundtrip_hits_bounds(self, rng):
        samples = window_dataset(make_frame(t=30), 5)
        tr, _, _ = split_chronological(samples, SplitSpec())
        scaled = scaler_apply(scaler_fit(tr), tr)
        stacked = np.concatenate([s.window for s in scaled], axis=0)
        assert np.allclose(stacked.min(axis=0), 0.0)
        assert np.allclose(stacked.max(axis=0), 1.0)

    def test_statistics_come_from_train_split_only(self):
        samples = window_dataset(make_frame(t=50), 5)
        tr, va, te = split_chronological(samples, SplitSpec())
        scaler = scaler_fit(tr)
        # corrupting the held-out splits must not move the fitted statistics
        for s in va + te:
            s.window[:] = 1e9
        again = scaler_fit(tr)
        assert np.array_equal(scaler.feature_min, again.feature_min)
        assert np.array_equal(scaler.feature_max, again.feature_max)
        expected_min = np.concatenate([s.window for s in tr]).min(axis=0)
        assert np.array_equal(scaler.feature_min, expected_min)

    def test_targets_never_scaled(self):
        samples = window_dataset(make_frame(t=30), 5)
        tr, _, _ = split_chronological(samples, SplitSpec())
        scaled = scaler_apply(scaler_fit(tr), tr)
        assert [s.target for s in scaled] == [s.target for s in tr]


def test_frame_invariants_enforced():
    with pytest.raises(SchemaError):
        FeatureFrame(
            dates=["2020-01-02", "2020-01-01"],
            features=np.zeros((2, 1)),
            close=np.ones(2),
            feature_names=["f"],
        )
    with pytest.raises(SchemaError):
        FeatureFrame(
            dates=["2020-01-01", "2020-01-02"],
            features=np.zeros((2, 1)),
            close=np.array([1.0, -1.0]),
            feature_names=["f"],
        )

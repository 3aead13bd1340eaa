import logging

import numpy as np
import pandas as pd
import pytest

from conftest import gaze_frame
from cogload.errors import DataError, LeakageError
from cogload.features import (FEATURE_NAMES, N_FEATURES, Trial, WindowSet, apply_scaler, augment, build_windows,
                              fit_scaler, flat_features, load_trials, second_features, slide_windows, split_dataset,
                              split_seconds, stride_for, trial_windows)


def stats_oracle(values):
    v = np.sort(np.asarray(values, dtype=np.float64))

    def pct(q):
        pos = q * (len(v) - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, len(v) - 1)
        return v[lo] + (pos - lo) * (v[hi] - v[lo])

    mean = v.sum() / len(v)
    std = np.sqrt(((v - mean) ** 2).sum() / len(v))
    return [mean, std, pct(0.5), pct(0.25), pct(0.75), v[-1], v[0], v[-1] - v[0]]


def frame_trial(frame, trial=0):
    return Trial(int(frame['participant'].iloc[0]), int(frame['scenario'].iloc[0]), frame, trial)


class TestAugment:

    def test_three_four_five(self):
        out = augment([0.0, 1 / 60], [0.0, 3.0], [0.0, 4.0])
        assert out.shape == (2, 8)
        assert np.array_equal(out[1, :5], [3.0, 4.0, 3.0, 4.0, 5.0])
        assert np.allclose(out[1, 5:], [180.0, 240.0, 300.0])

    def test_first_sample_and_stationary(self):
        out = augment(np.arange(5) / 60, np.full(5, 7.0), np.full(5, 9.0))
        assert np.array_equal(out[:, :2], np.tile([7.0, 9.0], (5, 1)))
        assert not out[:, 2:].any()

    def test_uses_actual_time_step(self):
        out = augment([0.0, 0.5], [0.0, 1.0], [0.0, 0.0])
        assert out[1, 5] == 2.0

    @pytest.mark.parametrize('t', [[0.0, 0.1, 0.1], [0.0, 0.2, 0.1]])
    def test_non_monotonic(self, t):
        with pytest.raises(DataError):
            augment(t, [0.0] * 3, [0.0] * 3)

    def test_empty(self):
        with pytest.raises(DataError):
            augment([], [], [])

    def test_deltas_telescope(self, rng):
        x = np.cumsum(rng.integers(-20, 21, 500)).astype(float)
        y = np.cumsum(rng.integers(-20, 21, 500)).astype(float)
        out = augment(np.arange(500) / 60, x, y)
        assert out[:, 2].sum() == x[-1] - x[0]
        assert out[:, 3].sum() == y[-1] - y[0]
        assert (out[:, 4] >= 0).all() and (out[:, 7] >= 0).all()


class TestSecondFeatures:

    def test_statistics_example(self):
        attrs = np.tile(np.array([[1.0], [2.0], [3.0], [4.0]]), (1, 8))
        out = second_features(attrs)
        assert len(out) == N_FEATURES == len(FEATURE_NAMES)
        assert np.allclose(out[:8], [2.5, 1.1180, 2.5, 1.75, 3.25, 4.0, 1.0, 3.0], atol=1e-4)

    def test_order_is_attribute_major(self):
        assert FEATURE_NAMES[:3] == ('x_mean', 'x_std', 'x_median')
        assert FEATURE_NAMES[8] == 'y_mean'
        assert FEATURE_NAMES[-1] == 'speed_range'

    def test_constant_attribute(self):
        out = second_features(np.full((6, 8), 4.5)).reshape(8, 8)
        assert np.array_equal(out[:, [0, 2, 3, 4, 5, 6]], np.full((8, 6), 4.5))
        assert not out[:, [1, 7]].any()

    @pytest.mark.parametrize('c', [0.1, -1e-3, 1234.567, 1.0 / 3.0])
    def test_constant_attribute_is_exact_for_inexact_values(self, c):
        block = np.full((60, 8), c)
        block[:, 1] = np.linspace(0.0, 1.0, 60)
        out = second_features(block).reshape(8, 8)
        const = np.delete(out, 1, axis=0)
        assert (const[:, [0, 2, 3, 4, 5, 6]] == c).all()
        assert (const[:, [1, 7]] == 0.0).all()
        assert out[1, 1] > 0.0

    def test_matches_oracle(self, rng):
        for n in (1, 2, 7, 60):
            attrs = rng.normal(size=(n, 8))
            out = second_features(attrs).reshape(8, 8)
            for a in range(8):
                assert np.allclose(out[a], stats_oracle(attrs[:, a]), atol=1e-12)

    def test_empty_window(self):
        with pytest.raises(DataError):
            second_features(np.zeros((0, 8)))

    def test_flat_features(self, rng):
        block = rng.normal(size=(60, 8))
        assert np.array_equal(flat_features([block]), second_features(block))
        const = [np.full((60, 8), 2.0)] * 5
        assert np.array_equal(flat_features(const), second_features(const[0]))
        blocks = [rng.normal(size=(60, 8)) for _ in range(4)]
        out = flat_features(blocks).reshape(8, 8)
        stacked = np.vstack(blocks)
        assert np.allclose(out[5], stats_oracle(stacked[:, 5]), atol=1e-12)
        with pytest.raises(DataError):
            flat_features([])


class TestScaler:

    def test_bounds(self, rng):
        train = rng.normal(size=(50, 64))
        train[:, 3] = 1.25
        out = apply_scaler(fit_scaler(train), train)
        assert out[train[:, 0].argmin(), 0] == 0.0
        assert out[train[:, 0].argmax(), 0] == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(out.min(axis=0)[[0, 1, 2]], 0.0)
        assert np.allclose(out.max(axis=0)[[0, 1, 2]], 1.0)
        assert not out[:, 3].any()
        assert ((out >= 0) & (out <= 1)).all()

    def test_clamps_unseen_values(self, rng):
        train = rng.uniform(size=(20, 64))
        scaler = fit_scaler(train)
        test = np.vstack([train.max(axis=0) + 5.0, train.min(axis=0) - 5.0])
        out = scaler.transform(test)
        assert np.array_equal(out, np.vstack([np.ones(64), np.zeros(64)]))

    def test_sequences_keep_shape(self, rng):
        seq = rng.normal(size=(4, 10, 64))
        out = fit_scaler(seq).transform(seq)
        assert out.shape == seq.shape
        assert out.min() == 0.0
        assert out.max() == pytest.approx(1.0, abs=1e-12)

    def test_restore_matches(self, rng):
        scaler = fit_scaler(rng.normal(size=(10, 64)))
        again = type(scaler).restore(*scaler.state())
        rows = rng.normal(size=(3, 64))
        assert np.array_equal(again.transform(rows), scaler.transform(rows))

    def test_leakage_is_detected(self, rng):
        train, test = rng.uniform(size=(20, 64)), rng.uniform(size=(5, 64))
        test[0] = 3.0
        fit_scaler(train).check_fitted_on(train)
        with pytest.raises(LeakageError):
            fit_scaler(np.vstack([train, test])).check_fitted_on(train)

    def test_empty_training_split(self):
        with pytest.raises(DataError):
            fit_scaler(np.zeros((0, 64)))


class TestWindows:

    def test_stride(self):
        assert [stride_for(t) for t in (1, 5, 10, 20, 30)] == [1, 1, 1, 2, 3]

    def test_twelve_seconds_at_ten(self):
        ws = trial_windows(frame_trial(gaze_frame(12.0)), 10)
        assert [w.offset for w in ws] == [0, 1, 2]
        assert all(w.features.shape == (10, 64) and w.flat.shape == (64,) for w in ws)

    def test_consecutive_windows_overlap(self):
        ws = trial_windows(frame_trial(gaze_frame(12.0, scenario=1)), 10)
        assert np.array_equal(ws[0].features[1:], ws[1].features[:-1])
        assert not np.array_equal(ws[0].features[0], ws[1].features[0])
        assert all(w.label == 1 for w in ws)

    def test_stride_two(self):
        ws = trial_windows(frame_trial(gaze_frame(25.0)), 20)
        assert [w.offset for w in ws] == [0, 2, 4]

    def test_short_trial_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert slide_windows([np.zeros((60, 8))] * 3, 10) == []
        assert 'shorter than t_w' in caplog.text

    def test_gap_starts_new_segment(self):
        frame = pd.concat([gaze_frame(5.0), gaze_frame(6.0, start=9.5, seed=1)], ignore_index=True)
        attrs = augment(frame['timestamp'], frame['x'], frame['y'])
        segments = split_seconds(frame['timestamp'].to_numpy(), attrs)
        assert [len(s) for s in segments] == [5, 6]
        assert sum(len(b) for s in segments for b in s) == len(frame)
        ws = trial_windows(frame_trial(frame), 5)
        assert [w.offset for w in ws] == [0, 5, 6]

    def test_no_windows_at_all(self):
        with pytest.raises(DataError):
            build_windows([frame_trial(gaze_frame(3.0))], 10)

    def test_statistics_are_ordered(self, raw_dir):
        ws = build_windows(load_trials(str(raw_dir)), 10)
        s = ws.features.reshape(-1, 8, 8)
        assert (s[..., 6] <= s[..., 3]).all()
        assert (s[..., 3] <= s[..., 2]).all()
        assert (s[..., 2] <= s[..., 4]).all()
        assert (s[..., 4] <= s[..., 5]).all()
        assert (s[..., 1] >= 0).all()
        assert np.array_equal(s[..., 7], s[..., 5] - s[..., 6])


class TestDataset:

    def test_load_and_build(self, raw_dir):
        trials = load_trials(str(raw_dir))
        assert len(trials) == 6
        assert sorted({t.participant for t in trials}) == [1, 2, 3]
        assert sorted(t.scenario for t in trials) == [0, 0, 0, 1, 1, 1]
        ws = build_windows(trials, 10)
        assert len(ws) == 66
        assert ws.features.shape == (66, 10, 64)
        assert int(ws.labels.sum()) == 33

    def test_save_and_load(self, raw_dir, tmp_path):
        ws = build_windows(load_trials(str(raw_dir)), 5)
        back = WindowSet.load(ws.save(str(tmp_path / 'ds.bin')))
        assert back.t_w == 5
        for name in ('features', 'flat', 'labels', 'participant', 'trial', 'offset'):
            assert np.array_equal(getattr(back, name), getattr(ws, name))

    def test_missing_directory_content(self, tmp_path):
        with pytest.raises(DataError):
            load_trials(str(tmp_path))

    def test_missing_columns(self, tmp_path):
        pd.DataFrame({'timestamp': [0.0], 'x': [1.0], 'y': [2.0]}).to_csv(tmp_path / 'a.csv', index=False)
        with pytest.raises(DataError, match='participant'):
            load_trials(str(tmp_path))


class TestSplit:

    def test_sizes(self):
        (s,) = split_dataset(100, seed=3)
        assert (len(s.train), len(s.val), len(s.test)) == (80, 10, 10)
        assert sorted(np.concatenate([s.train, s.val, s.test])) == list(range(100))

    def test_folds_are_disjoint(self):
        splits = split_dataset(100, k=5, seed=1)
        tests = [set(s.test) for s in splits]
        for i in range(5):
            for j in range(i + 1, 5):
                assert not tests[i] & tests[j]
        assert len(set().union(*tests)) <= 50
        for s in splits:
            assert not set(s.val) & set(s.train)
            assert not set(s.val) & set(s.test)
            assert not set(s.train) & set(s.test)

    def test_deterministic(self):
        a, b = split_dataset(60, k=2, seed=9), split_dataset(60, k=2, seed=9)
        assert all(np.array_equal(x.train, y.train) and np.array_equal(x.test, y.test) for x, y in zip(a, b))
        c = split_dataset(60, k=2, seed=10)
        assert not np.array_equal(a[0].test, c[0].test)

    def test_insufficient(self):
        with pytest.raises(DataError):
            split_dataset(5)
        with pytest.raises(DataError):
            split_dataset(15, k=9)

    def test_by_participant(self):
        groups = np.repeat(np.arange(20), 5)
        for s in split_dataset(100, k=2, seed=0, groups=groups):
            parts = [set(groups[p]) for p in (s.train, s.val, s.test)]
            assert [len(p) for p in parts] == [16, 2, 2]
            assert not parts[0] & parts[1] and not parts[0] & parts[2] and not parts[1] & parts[2]
            assert len(s.train) + len(s.val) + len(s.test) == 100

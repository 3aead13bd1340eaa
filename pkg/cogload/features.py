'''
Gaze preprocessing: attribute augmentation, per-second statistics, min-max
scaling, sliding windows and dataset splits.

A trial's samples are cut into whole seconds counted from the first sample of
the trial. An empty second starts a new segment (seconds are then counted
from that segment's first sample) so that windows never span a hole in the
recording; the streaming path applies the same rule.
'''

import glob
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.preprocessing import MinMaxScaler

from .checkpoint import read_named_arrays, write_named_arrays
from .errors import DataError, LeakageError

logger = logging.getLogger(__name__)

ATTRIBUTES = ('x', 'y', 'dx', 'dy', 'dist', 'vx', 'vy', 'speed')
STATISTICS = ('mean', 'std', 'median', 'p25', 'p75', 'max', 'min', 'range')
FEATURE_NAMES = tuple('{}_{}'.format(a, s) for a in ATTRIBUTES for s in STATISTICS)
N_FEATURES = len(FEATURE_NAMES)
RAW_COLUMNS = ('participant', 'scenario', 'timestamp', 'x', 'y')
MAX_GAP = 2.0


def augment(t, x, y):
    '''
    Per-sample attributes x, y, dx, dy, dist, vx, vy, speed.

    Deltas are taken from the previous sample using the actual time step; the
    first sample gets zeros for every derived attribute.

    Return
    ------
    ndarray [n, 8]
    '''
    t, x, y = (np.asarray(a, dtype=np.float64) for a in (t, x, y))
    if t.size == 0:
        raise DataError('cannot augment an empty sample list')
    dt = np.diff(t)
    if (dt <= 0).any():
        bad = int(np.argmax(dt <= 0)) + 1
        raise DataError('timestamps not strictly increasing at sample {} (t={})'.format(bad, t[bad]))

    out = np.zeros((t.size, 8))
    out[:, 0], out[:, 1] = x, y
    dx, dy = np.diff(x), np.diff(y)
    dist = np.sqrt(dx * dx + dy * dy)
    out[1:, 2], out[1:, 3], out[1:, 4] = dx, dy, dist
    out[1:, 5], out[1:, 6], out[1:, 7] = dx / dt, dy / dt, dist / dt
    return out


def second_features(attrs):
    '''
    The 8 statistics of each attribute over a block of samples, attribute-major:
    x_mean, x_std, x_median, x_p25, x_p75, x_max, x_min, x_range, y_mean, ...

    Population std; percentiles interpolate linearly between closest ranks.
    A constant attribute gets exactly its value for every location statistic
    and exactly 0 for std and range.
    '''
    attrs = np.asarray(attrs, dtype=np.float64)
    if attrs.ndim != 2 or attrs.shape[0] == 0:
        raise DataError('cannot summarize an empty window')
    p25, median, p75 = np.percentile(attrs, [25, 50, 75], axis=0)
    hi, lo = attrs.max(axis=0), attrs.min(axis=0)
    const = hi == lo
    mean = np.where(const, hi, attrs.mean(axis=0))
    std = np.where(const, 0.0, attrs.std(axis=0))
    stats = np.stack([mean, std, median, p25, p75, hi, lo, hi - lo], axis=1)
    return stats.reshape(-1)


def flat_features(second_attrs):
    '''
    The same 64 statistics recomputed over every raw sample of a window,
    given as a list of per-second attribute blocks.
    '''
    if not len(second_attrs):
        raise DataError('cannot summarize an empty window')
    return second_features(np.vstack(second_attrs))


def second_index(t, origin):
    return np.floor(np.asarray(t, dtype=np.float64) - origin).astype(np.int64)


def split_seconds(t, attrs):
    '''
    Cut a trial into segments of consecutive whole seconds.

    Return
    ------
    list of segments; each segment is a list of per-second attribute blocks
    '''
    t = np.asarray(t, dtype=np.float64)
    segments = []
    start = 0
    while start < t.size:
        idx = second_index(t[start:], t[start])
        jumps = np.nonzero(np.diff(idx) > 1)[0]
        stop = start + int(jumps[0]) + 1 if jumps.size else t.size
        idx = idx[:stop - start]
        bounds = np.nonzero(np.diff(idx))[0] + 1
        segments.append(np.split(attrs[start:stop], bounds))
        if stop < t.size:
            logger.debug('gap of %.3f s after t=%.3f starts a new segment', t[stop] - t[stop - 1], t[stop - 1])
        start = stop
    return segments


class FeatureScaler:
    '''
    Per-feature min-max scaling learned on the training split, clipped to
    [0, 1]. Features that are constant in training map to 0.
    '''

    def __init__(self):
        self._mm = MinMaxScaler(clip=True)
        self._zero = None

    def fit(self, features):
        rows = np.asarray(features, dtype=np.float64).reshape(-1, N_FEATURES)
        if rows.shape[0] == 0:
            raise DataError('cannot fit a scaler on an empty training split')
        self._mm.fit(rows)
        self._zero = self._mm.data_max_ == self._mm.data_min_
        return self

    @classmethod
    def restore(cls, data_min, data_max):
        data_min, data_max = np.asarray(data_min, dtype=np.float64), np.asarray(data_max, dtype=np.float64)
        if (data_max < data_min).any():
            raise DataError('scaler state has max < min')
        return cls().fit(np.vstack([data_min, data_max]))

    def state(self):
        return self._mm.data_min_.copy(), self._mm.data_max_.copy()

    def transform(self, features):
        arr = np.asarray(features, dtype=np.float64)
        out = self._mm.transform(arr.reshape(-1, N_FEATURES))
        out[:, self._zero] = 0.0
        return out.reshape(arr.shape)

    def check_fitted_on(self, train_features):
        '''Raise LeakageError unless min/max are exactly those of `train_features`.'''
        rows = np.asarray(train_features, dtype=np.float64).reshape(-1, N_FEATURES)
        lo, hi = self.state()
        if not (np.array_equal(lo, rows.min(axis=0)) and np.array_equal(hi, rows.max(axis=0))):
            raise LeakageError('feature scaler was not fitted on the training split alone')


def fit_scaler(train_features):
    return FeatureScaler().fit(train_features)


def apply_scaler(scaler, features):
    return scaler.transform(features)


########## Section: windows ##########


@dataclass
class SequenceSample:
    features: np.ndarray
    flat: np.ndarray
    label: int
    participant: int
    trial: int
    offset: int


def stride_for(t_w):
    return max(1, int(t_w) // 10)


def slide_windows(seconds, t_w, label=0, participant=0, trial=0, stride=None, offset0=0):
    '''
    Windows of `t_w` consecutive seconds with 90% overlap.

    Parameters
    ----------
    seconds : list of per-second attribute blocks of one segment
    stride : defaults to max(1, t_w // 10)

    Return
    ------
    list of SequenceSample; empty (with a warning) when there are fewer
    than t_w seconds
    '''
    if t_w < 1:
        raise DataError('window length must be at least one second, got {}'.format(t_w))
    stride = stride or stride_for(t_w)
    if len(seconds) < t_w:
        logger.warning('participant %s trial %s: %d s of data is shorter than t_w=%d, no windows',
                       participant, trial, len(seconds), t_w)
        return []
    per_second = np.stack([second_features(block) for block in seconds])
    out = []
    for off in range(0, len(seconds) - t_w + 1, stride):
        out.append(SequenceSample(per_second[off:off + t_w], flat_features(seconds[off:off + t_w]),
                                  int(label), int(participant), int(trial), offset0 + off))
    return out


@dataclass
class Trial:
    participant: int
    scenario: int
    frame: pd.DataFrame
    trial: int = 0
    source: str = ''

    def attributes(self):
        f = self.frame
        return augment(f['timestamp'].to_numpy(), f['x'].to_numpy(), f['y'].to_numpy())


def trial_windows(trial, t_w, stride=None):
    attrs = trial.attributes()
    out, offset = [], 0
    segments = split_seconds(trial.frame['timestamp'].to_numpy(), attrs)
    if len(segments) > 1:
        logger.warning('%s: %d gaps split the trial', trial.source or trial.trial, len(segments) - 1)
    for seconds in segments:
        if len(seconds) >= t_w or len(segments) == 1:
            out += slide_windows(seconds, t_w, trial.scenario, trial.participant, trial.trial, stride, offset)
        offset += len(seconds)
    return out


@dataclass
class WindowSet:
    '''
    Stacked windows: features [N, t_w, 64], flat [N, 64] and one label,
    participant, trial and offset per window.
    '''
    features: np.ndarray
    flat: np.ndarray
    labels: np.ndarray
    participant: np.ndarray
    trial: np.ndarray
    offset: np.ndarray
    t_w: int

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_samples(cls, samples, t_w):
        if not samples:
            raise DataError('no windows of t_w={} in the data'.format(t_w))
        return cls(np.stack([s.features for s in samples]), np.stack([s.flat for s in samples]),
                   np.array([s.label for s in samples]), np.array([s.participant for s in samples]),
                   np.array([s.trial for s in samples]), np.array([s.offset for s in samples]), int(t_w))

    def subset(self, idx):
        return WindowSet(self.features[idx], self.flat[idx], self.labels[idx], self.participant[idx],
                         self.trial[idx], self.offset[idx], self.t_w)

    def save(self, path):
        arrays = {'features': self.features, 'flat': self.flat, 'labels': self.labels,
                  'participant': self.participant, 'trial': self.trial, 'offset': self.offset}
        write_named_arrays(path, 'dataset', arrays, {'meta.t_w': np.array([float(self.t_w)])})
        return path

    @classmethod
    def load(cls, path):
        _, a, extras = read_named_arrays(path, 'dataset')
        ints = {k: a[k].astype(int) for k in ('labels', 'participant', 'trial', 'offset')}
        return cls(a['features'], a['flat'], ints['labels'], ints['participant'], ints['trial'],
                   ints['offset'], int(extras['meta.t_w'][0]))


def load_trials(data_dir):
    '''
    Read every raw gaze CSV (header participant,scenario,timestamp,x,y) in
    `data_dir`, one trial per file, sorted by file name.
    '''
    paths = sorted(glob.glob(os.path.join(data_dir, '*.csv')))
    if not paths:
        raise DataError('no gaze files (*.csv) in {}'.format(data_dir))
    trials = []
    for i, path in enumerate(paths):
        frame = pd.read_csv(path, float_precision='round_trip')
        missing = [c for c in RAW_COLUMNS if c not in frame.columns]
        if missing:
            raise DataError('{}: missing columns {}'.format(path, ', '.join(missing)))
        scenario = frame['scenario'].unique()
        if len(scenario) != 1 or scenario[0] not in (0, 1):
            raise DataError('{}: scenario must be a single 0/1 label, got {}'.format(path, scenario))
        trials.append(Trial(int(frame['participant'].iloc[0]), int(scenario[0]), frame, i, os.path.basename(path)))
    logger.info('loaded %d trials from %s', len(trials), data_dir)
    return trials


def build_windows(trials, t_w, stride=None):
    samples = []
    for trial in trials:
        samples += trial_windows(trial, t_w, stride)
    ws = WindowSet.from_samples(samples, t_w)
    logger.info('%d windows of %d s from %d trials', len(ws), t_w, len(trials))
    return ws


########## Section: splits ##########


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_dataset(n, k=1, seed=0, ratio=0.1, groups=None):
    '''
    k pairwise disjoint test folds of round(ratio * n) items drawn from one
    seeded permutation; each fold's validation set (same size) and training
    set are drawn from the remaining items.

    Parameters
    ----------
    n : number of windows
    groups : optional per-window group ids (participants); when given the
        split is made over groups and expanded to their windows

    Return
    ------
    list of k Split of window indices
    '''
    if groups is not None:
        groups = np.asarray(groups)
        units = np.unique(groups)
    else:
        units = np.arange(n)
    m = len(units)
    size = int(round(ratio * m))
    if size < 1 or k * size + size >= m:
        raise DataError('{} {} cannot hold {} disjoint test folds of {} plus validation and training'.format(
            m, 'groups' if groups is not None else 'windows', k, size))

    perm = np.random.default_rng(seed).permutation(m)
    splits = []
    for i in range(k):
        test = perm[i * size:(i + 1) * size]
        rest = np.setdiff1d(np.arange(m), test)
        rest = np.random.default_rng([seed, i]).permutation(rest)
        parts = (rest[size:], rest[:size], test)
        if groups is not None:
            parts = tuple(np.nonzero(np.isin(groups, units[p]))[0] for p in parts)
        else:
            parts = tuple(np.sort(p) for p in parts)
        splits.append(Split(*parts))
    return splits

'''
Streaming inference over a live sequence of gaze samples.

Samples are grouped into whole seconds counted from the first sample (or
from the first sample after a reset). When a second is complete its 64
statistics are scaled and pushed onto a rolling buffer of t_w seconds; once
the buffer is full every completed second yields the model's probability of
high workload. A gap of more than 2 s or a second without samples clears the
buffer. The computation mirrors the batch path in `features`, so replaying a
recorded trial gives exactly the batch window scores.
'''

import logging
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, DataError
from .features import MAX_GAP, augment, flat_features, second_features
from .model import predict_window

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Emission:
    timestamp: float
    probability: float
    label: int

    def line(self):
        return '{:.6f},{:.6f},{}'.format(self.timestamp, self.probability, self.label)


class GazeStream:
    '''
    Parameters
    ----------
    model : SequenceModel or LogRegModel
    scaler : FeatureScaler the model was trained behind
    t_w : window length in seconds
    threshold : decision threshold for the emitted label
    '''

    def __init__(self, model, scaler, t_w, threshold=0.5):
        if t_w < 1:
            raise DataError('window length must be at least one second, got {}'.format(t_w))
        self.model = model
        self.scaler = scaler
        self.t_w = int(t_w)
        self.threshold = threshold
        self.buffer = deque(maxlen=self.t_w)
        self.blocks = deque(maxlen=self.t_w)
        self.samples = []
        self.anchor = None
        self.last_t = None
        self.origin = None
        self.current = 0
        self.resets = 0

    def _reset(self, t, why):
        logger.warning('%s at t=%.3f: buffer reset', why, t)
        self.buffer.clear()
        self.blocks.clear()
        self.origin = t
        self.current = 0
        self.resets += 1

    def push(self, t, x, y):
        '''
        Feed one sample; returns the emissions it triggers (zero or one).
        '''
        t, x, y = float(t), float(x), float(y)
        if not all(map(math.isfinite, (t, x, y))):
            logger.warning('non-finite sample (%s, %s, %s) dropped', t, x, y)
            return []
        if self.last_t is not None and t <= self.last_t:
            logger.warning('out-of-order sample at t=%.6f (last %.6f) dropped', t, self.last_t)
            return []

        out = []
        if self.origin is None:
            self.origin = t
        sec = int(np.floor(np.float64(t) - self.origin))
        if sec != self.current:
            out += self._close_second()
            if t - self.last_t > MAX_GAP:
                self._reset(t, 'gap of {:.3f} s'.format(t - self.last_t))
            elif sec > self.current + 1:
                self._reset(t, 'empty second')
            else:
                self.current = sec
        self.samples.append((t, x, y))
        self.last_t = t
        return out

    def flush(self):
        '''Close the pending second at the end of the stream.'''
        return self._close_second()

    def _close_second(self):
        if not self.samples:
            return []
        block = np.array(self.samples)
        if self.anchor is not None:
            block = np.vstack([self.anchor, block])
            attrs = augment(block[:, 0], block[:, 1], block[:, 2])[1:]
        else:
            attrs = augment(block[:, 0], block[:, 1], block[:, 2])
        self.anchor = self.samples[-1]
        self.samples = []

        self.blocks.append(attrs)
        self.buffer.append(second_features(attrs))
        if len(self.buffer) < self.t_w:
            return []
        if self.model.variant == 'logreg':
            window = self.scaler.transform(flat_features(list(self.blocks)))
        else:
            window = self.scaler.transform(np.stack(self.buffer))
        p = predict_window(self.model, window)
        return [Emission(self.origin + self.current + 1, p, int(p >= self.threshold))]


def parse_events(lines):
    '''
    `timestamp,x,y` lines to float triples; blank lines, a header and
    malformed lines are skipped (the latter with a warning).
    '''
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        parts = line.split(',')
        try:
            if len(parts) != 3:
                raise ValueError(line)
            yield float(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            if n == 1 and parts[0].strip().lower() == 'timestamp':
                continue
            logger.warning('line %d: cannot parse %r as timestamp,x,y', n, line)


def stream_infer(checkpoint, events, t_w=None, threshold=None):
    '''
    Yield one Emission per completed second once t_w seconds are buffered.

    Parameters
    ----------
    checkpoint : Checkpoint (with scaler state)
    events : iterable of (timestamp, x, y)
    t_w, threshold : default to the values recorded in the checkpoint
    '''
    t_w = t_w or checkpoint.meta.get('t_w')
    if not t_w:
        raise CheckpointError('checkpoint records no t_w; pass one explicitly')
    if threshold is None:
        threshold = checkpoint.meta.get('threshold', 0.5)
    stream = GazeStream(checkpoint.model(), checkpoint.scaler(), int(t_w), threshold)
    for t, x, y in events:
        yield from stream.push(t, x, y)
    yield from stream.flush()

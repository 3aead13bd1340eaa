'''
Run configuration: a flat `key = value` file plus `key=value` overrides.

Every key belongs to RunConfig; unknown keys, values that do not parse as
the field's type and out-of-range values raise ConfigError naming the key.
'''

import logging
import os
from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .model import DEFAULT_SIZES, VARIANTS, TrainConfig
from .protocol import SPLIT_MODES
from .synthgaze import GeneratorKnobs, ScenarioConfig

logger = logging.getLogger(__name__)

MODELS = VARIANTS + ('logreg',)


@dataclass(frozen=True)
class RunConfig:
    # paths
    data_dir: str = None
    dataset: str = None
    checkpoint: str = None
    output_dir: str = None
    input: str = None
    # features
    t_w: int = 10
    # model
    model: str = 'mhyperlstm'
    n_h: int = 0
    n_aux: int = 16
    n_z: int = 4
    n_fc: int = 0
    layer_norm: bool = True
    # training
    lr: float = 1e-4
    epochs: int = 50
    label_smoothing: float = 0.2
    l2: float = 1e-4
    batch_size: int = 32
    seed: int = 0
    # generator
    participants: int = 20
    trials_per_condition: int = 1
    trial_duration: float = 90.0
    separation: float = 1.0
    dwell_low: float = 0.3
    dwell_high: float = 0.5
    dispersion_ratio: float = 1.5
    interval_size: float = 100.0
    speed_low: float = 120.0
    speed_high: float = 130.0
    plot: bool = True
    # evaluation
    folds: int = 5
    split_mode: str = 'window'
    n_jobs: int = 1
    threshold: float = 0.5
    eval_models: str = 'lstm,hyperlstm,mhyperlstm,logreg'
    eval_windows: str = ''

    def validate(self):
        _at_least(self, 't_w', 1)
        _at_least(self, 'epochs', 1)
        _at_least(self, 'batch_size', 1)
        _at_least(self, 'folds', 1)
        _at_least(self, 'participants', 1)
        _at_least(self, 'trials_per_condition', 1)
        _at_least(self, 'n_aux', 1)
        _at_least(self, 'n_z', 1)
        _at_least(self, 'n_h', 0)
        _at_least(self, 'n_fc', 0)
        for key in ('lr', 'trial_duration', 'dwell_low', 'dwell_high', 'dispersion_ratio', 'interval_size',
                    'speed_low'):
            if not getattr(self, key) > 0:
                raise ConfigError(key, 'must be positive, got {}'.format(getattr(self, key)))
        if not 0 <= self.label_smoothing < 1:
            raise ConfigError('label_smoothing', 'must lie in [0, 1), got {}'.format(self.label_smoothing))
        if self.l2 < 0:
            raise ConfigError('l2', 'must be non-negative, got {}'.format(self.l2))
        if self.separation < 0:
            raise ConfigError('separation', 'must be non-negative, got {}'.format(self.separation))
        if self.speed_high < self.speed_low:
            raise ConfigError('speed_high', 'must not be below speed_low ({})'.format(self.speed_low))
        if not 0 <= self.threshold <= 1:
            raise ConfigError('threshold', 'must lie in [0, 1], got {}'.format(self.threshold))
        if self.n_jobs == 0:
            raise ConfigError('n_jobs', 'must be non-zero (-1 uses every core)')
        if self.model not in MODELS:
            raise ConfigError('model', 'unknown model {!r}, expected one of {}'.format(self.model, ', '.join(MODELS)))
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError('split_mode', 'expected one of {}, got {!r}'.format(', '.join(SPLIT_MODES),
                                                                             self.split_mode))
        for m in self.models:
            if m not in MODELS:
                raise ConfigError('eval_models', 'unknown model {!r}'.format(m))
        return self

    @property
    def models(self):
        return [m.strip() for m in self.eval_models.split(',') if m.strip()]

    @property
    def windows(self):
        '''Window lengths for `eval` / `sweep`: eval_windows, or t_w alone.'''
        if not self.eval_windows.strip():
            return [self.t_w]
        try:
            out = [int(w) for w in self.eval_windows.split(',') if w.strip()]
        except ValueError:
            raise ConfigError('eval_windows', 'expected comma-separated integers, got {!r}'.format(self.eval_windows))
        if not out or min(out) < 1:
            raise ConfigError('eval_windows', 'window lengths must be at least 1, got {!r}'.format(self.eval_windows))
        return out

    def require(self, *keys, exists=False):
        '''Raise ConfigError unless each path key is set (and exists, for inputs).'''
        for key in keys:
            value = getattr(self, key)
            if not value:
                raise ConfigError(key, 'required path is not set')
            if exists and not os.path.exists(value):
                raise ConfigError(key, 'no such file or directory: {}'.format(value))
        return self

    def size_config(self, variant=None):
        variant = variant or self.model
        if variant == 'logreg':
            return None
        base = DEFAULT_SIZES[variant]
        return replace(base, n_h=self.n_h or base.n_h, n_aux=self.n_aux, n_z=self.n_z,
                       n_fc=self.n_fc or None, layer_norm=self.layer_norm)

    def train_config(self, verbose=False):
        return TrainConfig(lr=self.lr, epochs=self.epochs, label_smoothing=self.label_smoothing, l2=self.l2,
                           batch_size=self.batch_size, seed=self.seed, verbose=verbose)

    def knobs(self):
        return GeneratorKnobs(dwell_low=self.dwell_low, dwell_high=self.dwell_high,
                              dispersion_ratio=self.dispersion_ratio, separation=self.separation)

    def scenario(self):
        return ScenarioConfig(interval_size=self.interval_size, duration=self.trial_duration,
                              speed_low=self.speed_low, speed_high=self.speed_high)

    def render(self):
        '''The resolved configuration as `key = value` lines.'''
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append('{} = {}'.format(f.name, '' if value is None else value))
        return '\n'.join(lines)


def _at_least(cfg, key, low):
    value = getattr(cfg, key)
    if value < low:
        raise ConfigError(key, 'must be at least {}, got {}'.format(low, value))


_FIELDS = {f.name: f for f in fields(RunConfig)}
_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off')


def _coerce(key, raw):
    if key not in _FIELDS:
        raise ConfigError(key, 'unknown configuration key')
    kind = _FIELDS[key].type
    raw = raw.strip()
    if _FIELDS[key].default is None:
        return raw or None
    try:
        if kind is bool:
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(key, 'expected {}, got {!r}'.format(kind.__name__, raw))


def _split(line, where):
    if '=' not in line:
        raise ConfigError(line.strip(), 'expected key = value ({})'.format(where))
    key, value = line.split('=', 1)
    return key.strip(), value


def read_config_file(path):
    '''Parse a `key = value` file; `#` starts a comment.'''
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError('config', 'cannot read {}: {}'.format(path, err))
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0]
        if not line.strip():
            continue
        key, raw = _split(line, '{} line {}'.format(path, n))
        values[key] = _coerce(key, raw)
    return values


def parse_config(path=None, overrides=(), **flags):
    '''
    Resolve a RunConfig from defaults, then the config file, then `key=value`
    overrides, then keyword flags (None values ignored).
    '''
    values = read_config_file(path) if path else {}
    for item in overrides:
        key, raw = _split(item, 'override')
        values[key] = _coerce(key, raw)
    for key, value in flags.items():
        if value is not None:
            if key not in _FIELDS:
                raise ConfigError(key, 'unknown configuration key')
            values[key] = value
    cfg = RunConfig(**values).validate()
    logger.debug('resolved configuration:\n%s', cfg.render())
    return cfg

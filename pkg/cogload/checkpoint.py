'''
Binary checkpoint format.

    magic      b"MHLS"
    version    u32 little-endian
    tag        u32 length + UTF-8 (cell variant, or "dataset")
    section 1  u32 count, then per array:
                   name (u32 length + UTF-8), rank u32, dims u32 each,
                   data as little-endian float64, row-major
    section 2  same encoding: scaler state, metadata, size config

Every value is stored as float64, so parameters round-trip bit for bit.
'''

import logging
import math
import os
import struct
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import CheckpointError
from .model import SizeConfig, build_model
from .tensor import parameter

logger = logging.getLogger(__name__)

MAGIC = b'MHLS'
VERSION = 1

_U32 = struct.Struct('<I')


def _pack_str(s):
    raw = s.encode('utf-8')
    return _U32.pack(len(raw)) + raw


def _pack_array(name, arr):
    arr = np.ascontiguousarray(arr, dtype='<f8')
    out = [_pack_str(name), _U32.pack(arr.ndim)]
    out += [_U32.pack(d) for d in arr.shape]
    out.append(arr.tobytes())
    return b''.join(out)


def _pack_section(named):
    return _U32.pack(len(named)) + b''.join(_pack_array(k, v) for k, v in named.items())


class _Reader:
    '''Cursor over a checkpoint buffer; every short read is a CheckpointError.'''

    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError('{}: truncated at byte {} (needed {} more)'.format(self.path, self.pos, n))
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return _U32.unpack(self.take(4))[0]

    def string(self):
        try:
            return self.take(self.u32()).decode('utf-8')
        except UnicodeDecodeError as err:
            raise CheckpointError('{}: malformed name at byte {}'.format(self.path, self.pos)) from err

    def array(self):
        name = self.string()
        dims = tuple(self.u32() for _ in range(self.u32()))
        count = math.prod(dims)
        if 8 * count > len(self.buf) - self.pos:
            raise CheckpointError('{}: truncated at byte {} (array {!r} of shape {} needs {} bytes)'.format(
                self.path, self.pos, name, dims, 8 * count))
        data = np.frombuffer(self.take(8 * count), dtype='<f8').astype(np.float64)
        try:
            return name, data.reshape(dims)
        except ValueError as err:
            raise CheckpointError('{}: array {!r} has a malformed shape {}'.format(self.path, name, dims)) from err

    def section(self):
        return dict(self.array() for _ in range(self.u32()))


def write_named_arrays(path, tag, params, extras=None):
    '''
    Write two count-prefixed sections of named float64 arrays under `tag`.
    '''
    body = MAGIC + _U32.pack(VERSION) + _pack_str(tag) + _pack_section(params) + _pack_section(extras or {})
    try:
        with open(path, 'wb') as fh:
            fh.write(body)
    except OSError as err:
        raise CheckpointError('cannot write {}: {}'.format(path, err)) from err
    logger.info('wrote %s (%s, %d arrays, %d bytes)', path, tag, len(params), len(body))


def read_named_arrays(path, tag=None):
    '''
    Return
    ------
    (tag, params dict, extras dict)
    '''
    try:
        with open(path, 'rb') as fh:
            buf = fh.read()
    except OSError as err:
        raise CheckpointError('cannot read {}: {}'.format(path, err)) from err
    r = _Reader(buf, path)
    if r.take(4) != MAGIC:
        raise CheckpointError('{}: not a checkpoint (bad magic)'.format(path))
    version = r.u32()
    if version != VERSION:
        raise CheckpointError('{}: unsupported format version {} (expected {})'.format(path, version, VERSION))
    found = r.string()
    if tag is not None and found != tag:
        raise CheckpointError('{}: holds {!r}, expected {!r}'.format(path, found, tag))
    params = r.section()
    extras = r.section()
    if r.pos != len(buf):
        raise CheckpointError('{}: {} trailing bytes'.format(path, len(buf) - r.pos))
    return found, params, extras


########## Section: model checkpoints ##########


@dataclass
class Checkpoint:
    '''
    A trained model's parameters with the feature scaler it was trained
    behind and its training metadata (epoch, val_loss, threshold, t_w).
    '''
    variant: str
    size: SizeConfig
    params: dict
    scaler_min: np.ndarray = None
    scaler_max: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model, scaler=None, meta=None):
        smin, smax = scaler.state() if scaler is not None else (None, None)
        return cls(model.variant, model.size, {k: t.data.copy() for k, t in model.parameters().items()},
                   smin, smax, dict(meta or {}))

    def model(self):
        '''Rebuild the model; every stored name must match the variant's layout.'''
        template = build_model(self.variant, self.size)
        expected = template.parameters()
        missing = sorted(set(expected) - set(self.params))
        extra = sorted(set(self.params) - set(expected))
        if missing or extra:
            raise CheckpointError('{} layout mismatch: missing {}, unexpected {}'.format(
                self.variant, missing[:3], extra[:3]))
        named = {}
        for name, t in expected.items():
            arr = self.params[name]
            if arr.shape != t.shape:
                raise CheckpointError('{}: stored shape {} but model expects {}'.format(name, arr.shape, t.shape))
            named[name] = parameter(arr)
        return template.replace(named)

    def scaler(self):
        from .features import FeatureScaler
        if self.scaler_min is None:
            raise CheckpointError('checkpoint carries no feature scaler')
        return FeatureScaler.restore(self.scaler_min, self.scaler_max)


def _size_arrays(size):
    out = {}
    for f in fields(SizeConfig):
        value = getattr(size, f.name)
        out['size.' + f.name] = np.array([0.0 if value is None else float(value)])
    return out


def _size_from(extras, path):
    kwargs = {}
    for f in fields(SizeConfig):
        key = 'size.' + f.name
        if key not in extras:
            raise CheckpointError('{}: missing {}'.format(path, key))
        value = extras[key].reshape(-1)[0]
        if f.name == 'layer_norm':
            kwargs[f.name] = bool(value)
        elif f.name == 'n_fc':
            kwargs[f.name] = int(value) or None
        else:
            kwargs[f.name] = int(value)
    return SizeConfig(**kwargs)


def save(ckpt, path):
    extras = _size_arrays(ckpt.size)
    if ckpt.scaler_min is not None:
        extras['scaler.min'] = ckpt.scaler_min
        extras['scaler.max'] = ckpt.scaler_max
    for k, v in ckpt.meta.items():
        extras['meta.' + k] = np.array([float(v)])
    write_named_arrays(path, ckpt.variant, ckpt.params, extras)
    return path


def load(path, variant=None):
    '''
    Parameters
    ----------
    variant : when given, a checkpoint of another variant is rejected
    '''
    if not os.path.exists(path):
        raise CheckpointError('no checkpoint at {}'.format(path))
    tag, params, extras = read_named_arrays(path)
    if tag == 'dataset':
        raise CheckpointError('{} is a processed dataset, not a model checkpoint'.format(path))
    if variant is not None and tag != variant:
        raise CheckpointError('{}: variant {!r} cannot be loaded as {!r}'.format(path, tag, variant))
    meta = {k[5:]: float(v.reshape(-1)[0]) for k, v in extras.items() if k.startswith('meta.')}
    return Checkpoint(tag, _size_from(extras, path), params,
                      extras.get('scaler.min'), extras.get('scaler.max'), meta)

'''
Recurrent cells: LSTM, HyperLSTM and the mixture HyperLSTM (m-HyperLSTM).

All three share one main-cell update (gates, memory, output) and differ in
where the weights of that update come from:

    lstm        static W*, I*, b*
    hyperlstm   static W*, I*, b*_0 rescaled row by row from an auxiliary LSTM
    mhyperlstm  a blend of N_z weight banks with coefficients z = sigmoid(W^z h_aux + b^z)

Parameters are held in frozen dataclasses whose `tensors` dict maps a short
name (W_i, I_f, ln_g_cell, ...) to a Tensor. States and inputs may carry one
leading batch axis; the same code handles a single sequence.
'''

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import (Tensor, add, concat, layer_norm, matvec, mode3_contract, mul,
                     parameter, reshape, sigmoid, tanh)

logger = logging.getLogger(__name__)

GATES = ('i', 'f', 'o', 'c')
FORGET_OFFSET = 1.0


@dataclass(frozen=True)
class CellState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, n_h, batch_shape=()):
        shape = tuple(batch_shape) + (n_h,)
        return cls(Tensor(np.zeros(shape)), Tensor(np.zeros(shape)))


@dataclass(frozen=True)
class ZInjection:
    '''
    Replace the computed mixture coefficients with a fixed vector `z`.
    '''
    z: object = None

    @property
    def active(self):
        return self.z is not None


########## Section: parameter bundles ##########


@dataclass(frozen=True)
class LstmParams:
    n_h: int
    n_x: int
    tensors: dict
    layer_norm: bool = True
    variant = 'lstm'

    def __getitem__(self, name):
        return self.tensors[name]

    def named(self, prefix=''):
        return {prefix + k: v for k, v in self.tensors.items()}

    def replace(self, named):
        return LstmParams(self.n_h, self.n_x, {k: named.get(k, v) for k, v in self.tensors.items()},
                          self.layer_norm)


@dataclass(frozen=True)
class HyperLstmParams:
    '''
    Main-cell base weights, static bias offsets b0_*, one embedding head per
    gate and weight family (hidden rows, input rows, bias), and the auxiliary
    LSTM that reads concat(x_t, h_{t-1}).
    '''
    n_h: int
    n_x: int
    n_aux: int
    n_z: int
    tensors: dict
    aux: LstmParams
    layer_norm: bool = True
    variant = 'hyperlstm'

    def __getitem__(self, name):
        return self.tensors[name]

    def named(self, prefix=''):
        out = {prefix + k: v for k, v in self.tensors.items()}
        out.update(self.aux.named(prefix + 'aux.'))
        return out

    def replace(self, named):
        aux = {k[4:]: v for k, v in named.items() if k.startswith('aux.')}
        return HyperLstmParams(self.n_h, self.n_x, self.n_aux, self.n_z,
                               {k: named.get(k, v) for k, v in self.tensors.items()},
                               self.aux.replace(aux), self.layer_norm)


@dataclass(frozen=True)
class MixtureHyperParams:
    '''
    Weight banks W_* [N_h, N_h, N_z], I_* [N_h, N_x, N_z], b_* [N_h, N_z],
    the single z head (Wz, bz) shared by every gate and family, the
    main-cell layer norm and the auxiliary LSTM.
    '''
    n_h: int
    n_x: int
    n_aux: int
    n_z: int
    tensors: dict
    aux: LstmParams
    layer_norm: bool = True
    variant = 'mhyperlstm'

    def __getitem__(self, name):
        return self.tensors[name]

    def named(self, prefix=''):
        out = {prefix + k: v for k, v in self.tensors.items()}
        out.update(self.aux.named(prefix + 'aux.'))
        return out

    def replace(self, named):
        aux = {k[4:]: v for k, v in named.items() if k.startswith('aux.')}
        return MixtureHyperParams(self.n_h, self.n_x, self.n_aux, self.n_z,
                                  {k: named.get(k, v) for k, v in self.tensors.items()},
                                  self.aux.replace(aux), self.layer_norm)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape))


def _layer_norm_params(tensors, n_h, layer_norm):
    '''Gains and shifts for the four gates and the memory cell.'''
    if not layer_norm:
        return
    for g in GATES + ('cell',):
        tensors['ln_g_' + g] = parameter(np.ones(n_h))
        shift = np.full(n_h, FORGET_OFFSET) if g == 'f' else np.zeros(n_h)
        tensors['ln_b_' + g] = parameter(shift)


def init_lstm(n_h, n_x, rng, layer_norm=True):
    '''
    Uniform weights in +-1/sqrt(fan_in), zero biases, unit layer-norm gains.
    The forget gate starts open: its layer-norm shift is 1 when layer norm is
    on, its bias is 1 otherwise.
    '''
    tensors = {}
    for g in GATES:
        tensors['W_' + g] = _uniform(rng, (n_h, n_h), n_h)
        tensors['I_' + g] = _uniform(rng, (n_h, n_x), n_x)
        offset = FORGET_OFFSET if g == 'f' and not layer_norm else 0.0
        tensors['b_' + g] = parameter(np.full(n_h, offset))
    _layer_norm_params(tensors, n_h, layer_norm)
    return LstmParams(n_h, n_x, tensors, layer_norm)


def init_hyper_lstm(n_h, n_x, n_aux, n_z, rng, layer_norm=True):
    '''
    Base weights as in `init_lstm`. Row-scaling heads start as the identity
    scaling (zero Whz, unit bhz, Whd = 1/N_z, so every d equals 1); bias heads
    start with a small gaussian Wbz and zero Wbd.
    '''
    base = init_lstm(n_h, n_x, rng, layer_norm)
    tensors = {}
    for g in GATES:
        tensors['W_' + g] = base['W_' + g]
        tensors['I_' + g] = base['I_' + g]
        tensors['b0_' + g] = base['b_' + g]
        for fam in ('h', 'x'):
            tensors['W{}z_{}'.format(fam, g)] = parameter(np.zeros((n_z, n_aux)))
            tensors['b{}z_{}'.format(fam, g)] = parameter(np.ones(n_z))
            tensors['W{}d_{}'.format(fam, g)] = parameter(np.full((n_h, n_z), 1.0 / n_z))
        tensors['Wbz_' + g] = parameter(rng.normal(0.0, 0.01, size=(n_z, n_aux)))
        tensors['Wbd_' + g] = parameter(np.zeros((n_h, n_z)))
    tensors.update({k: v for k, v in base.tensors.items() if k.startswith('ln_')})
    aux = init_lstm(n_aux, n_x + n_h, rng, layer_norm)
    return HyperLstmParams(n_h, n_x, n_aux, n_z, tensors, aux, layer_norm)


def init_mixture(n_h, n_x, n_aux, n_z, rng, layer_norm=True):
    '''
    Every bank slice is drawn like an independent LSTM of width N_h, so the
    initial blend behaves like an average of N_z small LSTMs.
    '''
    tensors = {}
    for g in GATES:
        tensors['W_' + g] = _uniform(rng, (n_h, n_h, n_z), n_h)
        tensors['I_' + g] = _uniform(rng, (n_h, n_x, n_z), n_x)
        offset = FORGET_OFFSET if g == 'f' and not layer_norm else 0.0
        tensors['b_' + g] = parameter(np.full((n_h, n_z), offset))
    tensors['Wz'] = _uniform(rng, (n_z, n_aux), n_aux)
    tensors['bz'] = parameter(np.zeros(n_z))
    _layer_norm_params(tensors, n_h, layer_norm)
    aux = init_lstm(n_aux, n_x + n_h, rng, layer_norm)
    return MixtureHyperParams(n_h, n_x, n_aux, n_z, tensors, aux, layer_norm)


def slice_mixture(p, k):
    '''
    The plain LSTM held in bank slice `k` of a mixture cell, sharing the
    mixture's main-cell layer norm.
    '''
    if not 0 <= k < p.n_z:
        raise IndexError('slice {} out of range for N_z={}'.format(k, p.n_z))
    tensors = {}
    for g in GATES:
        tensors['W_' + g] = Tensor(np.ascontiguousarray(p['W_' + g].data[:, :, k]))
        tensors['I_' + g] = Tensor(np.ascontiguousarray(p['I_' + g].data[:, :, k]))
        tensors['b_' + g] = Tensor(np.ascontiguousarray(p['b_' + g].data[:, k]))
    tensors.update({k_: v for k_, v in p.tensors.items() if k_.startswith('ln_')})
    return LstmParams(p.n_h, p.n_x, tensors, p.layer_norm)


def param_count(p):
    '''Number of learnable scalars, heads and layer norm included.'''
    return int(sum(t.size for t in p.named().values()))


########## Section: steps ##########


def _check(p, s, x):
    if x.shape[-1] != p.n_x:
        raise ShapeError('input has shape {}, cell expects N_x={}'.format(x.shape, p.n_x))
    if s.h.shape[-1] != p.n_h or s.c.shape != s.h.shape:
        raise ShapeError('state shapes h={} c={} do not match N_h={}'.format(s.h.shape, s.c.shape, p.n_h))
    if s.h.shape[:-1] != x.shape[:-1]:
        raise ShapeError('state batch {} and input batch {} differ'.format(s.h.shape, x.shape))


def _preactivation(w, i, b, h, x):
    return add(add(matvec(w, h), matvec(i, x)), b)


def _update(pre, s, tensors, use_ln):
    '''Main-cell update from the four gate pre-activations.'''
    if use_ln:
        pre = {g: layer_norm(pre[g], tensors['ln_g_' + g], tensors['ln_b_' + g]) for g in GATES}
    i, f, o = sigmoid(pre['i']), sigmoid(pre['f']), sigmoid(pre['o'])
    c = add(mul(f, s.c), mul(i, tanh(pre['c'])))
    c_out = layer_norm(c, tensors['ln_g_cell'], tensors['ln_b_cell']) if use_ln else c
    return CellState(mul(o, tanh(c_out)), c)


def lstm_step(p, s, x):
    '''
    One LSTM step without peephole connections.

    Parameters
    ----------
    p : LstmParams
    s : CellState with h, c of shape [..., N_h]
    x : Tensor [..., N_x]
    '''
    x = x if isinstance(x, Tensor) else Tensor(x)
    _check(p, s, x)
    pre = {g: _preactivation(p['W_' + g], p['I_' + g], p['b_' + g], s.h, x) for g in GATES}
    return _update(pre, s, p.tensors, p.layer_norm)


def hyper_rowscale(base, W_hz, b_h, W_hd, h_aux):
    '''
    Scale row j of `base` by d_j, where z = W_hz h_aux + b_h and d = W_hd z.
    A batched `h_aux` yields one scaled matrix per batch row.
    '''
    if W_hz.shape[-1] != h_aux.shape[-1] or W_hd.shape != (base.shape[0], W_hz.shape[0]) \
            or b_h.shape != (W_hz.shape[0],):
        raise ShapeError('hyper_rowscale: base {}, W_hz {}, b_h {}, W_hd {}, h_aux {}'.format(
            base.shape, W_hz.shape, b_h.shape, W_hd.shape, h_aux.shape))
    d = matvec(W_hd, add(matvec(W_hz, h_aux), b_h))
    return mul(reshape(d, d.shape + (1,)), base)


def _aux_input(x, s_main):
    return concat([x, s_main.h], axis=-1)


def hyper_lstm_step(p, s_main, s_aux, x):
    '''
    Advance the auxiliary LSTM on concat(x, h_{t-1}), generate this step's
    main weights from its hidden state, then apply the main update.

    Return
    ------
    (main state, aux state)
    '''
    x = x if isinstance(x, Tensor) else Tensor(x)
    _check(p, s_main, x)
    s_aux = lstm_step(p.aux, s_aux, _aux_input(x, s_main))
    h_aux = s_aux.h
    pre = {}
    for g in GATES:
        w = hyper_rowscale(p['W_' + g], p['Whz_' + g], p['bhz_' + g], p['Whd_' + g], h_aux)
        i = hyper_rowscale(p['I_' + g], p['Wxz_' + g], p['bxz_' + g], p['Wxd_' + g], h_aux)
        b = add(matvec(p['Wbd_' + g], matvec(p['Wbz_' + g], h_aux)), p['b0_' + g])
        pre[g] = _preactivation(w, i, b, s_main.h, x)
    return _update(pre, s_main, p.tensors, p.layer_norm), s_aux


def mixture_z(p, h_aux):
    '''z = sigmoid(W^z h_aux + b^z), every component in (0, 1).'''
    return sigmoid(add(matvec(p['Wz'], h_aux), p['bz']))


def m_hyper_step(p, s_main, s_aux, x, inject=None):
    '''
    One m-HyperLSTM step. The weights of every gate are the banks contracted
    with z along their last axis; `inject` overrides z.

    Return
    ------
    (main state, aux state, z)
    '''
    x = x if isinstance(x, Tensor) else Tensor(x)
    _check(p, s_main, x)
    s_aux = lstm_step(p.aux, s_aux, _aux_input(x, s_main))
    if inject is not None and inject.active:
        z = inject.z if isinstance(inject.z, Tensor) else Tensor(inject.z)
        if z.shape[-1:] != (p.n_z,):
            raise ShapeError('injected z has shape {}, expected N_z={}'.format(z.shape, p.n_z))
    else:
        z = mixture_z(p, s_aux.h)
    pre = {}
    for g in GATES:
        w = mode3_contract(p['W_' + g], z)
        i = mode3_contract(p['I_' + g], z)
        b = matvec(p['b_' + g], z)
        pre[g] = _preactivation(w, i, b, s_main.h, x)
    return _update(pre, s_main, p.tensors, p.layer_norm), s_aux, z


########## Section: uniform driver ##########


def initial_states(p, batch_shape=()):
    states = (CellState.zeros(p.n_h, batch_shape),)
    if p.variant != 'lstm':
        states += (CellState.zeros(p.n_aux, batch_shape),)
    return states


def advance(p, states, x):
    '''Step any cell variant; returns the new state tuple.'''
    if p.variant == 'lstm':
        return (lstm_step(p, states[0], x),)
    if p.variant == 'hyperlstm':
        return hyper_lstm_step(p, states[0], states[1], x)
    main, aux, _ = m_hyper_step(p, states[0], states[1], x)
    return main, aux


INITIALIZERS = {
    'lstm': lambda size, rng: init_lstm(size.n_h, size.n_x, rng, size.layer_norm),
    'hyperlstm': lambda size, rng: init_hyper_lstm(size.n_h, size.n_x, size.n_aux, size.n_z, rng,
                                                   size.layer_norm),
    'mhyperlstm': lambda size, rng: init_mixture(size.n_h, size.n_x, size.n_aux, size.n_z, rng,
                                                 size.layer_norm),
}

'''
Sequence classifier around a recurrent cell, its loss and its trainer.

Every step's hidden state goes through the head
    y_t = softmax(W2 relu(W1 h_t + b1) + b2)
and the sequence loss weights step t by exp(t - T), so the last step counts
fully and earlier steps decay geometrically.
'''

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import cells
from .errors import ConfigError, DataError, GradientError, TrainingDiverged
from .tensor import (Tensor, add, gradients, log, matvec, mul, no_grad, parameter, relu,
                     reshape, sigmoid, softmax, sub, total)

logger = logging.getLogger(__name__)

VARIANTS = ('lstm', 'hyperlstm', 'mhyperlstm')
N_FEATURES = 64
EVAL_BATCH = 512


@dataclass(frozen=True)
class SizeConfig:
    '''
    n_h : main hidden units
    n_aux : auxiliary hidden units (hyper variants)
    n_z : embedding / mixture size (hyper variants)
    n_fc : head width, defaults to n_h
    '''
    n_h: int
    n_aux: int = 16
    n_z: int = 4
    n_fc: int = None
    n_x: int = N_FEATURES
    n_classes: int = 2
    layer_norm: bool = True

    @property
    def fc(self):
        return self.n_fc or self.n_h


# sizes giving the three variants a similar parameter count at N_x = 64
DEFAULT_SIZES = {
    'lstm': SizeConfig(n_h=100),
    'hyperlstm': SizeConfig(n_h=75, n_aux=16, n_z=4),
    'mhyperlstm': SizeConfig(n_h=32, n_aux=16, n_z=4),
}


@dataclass(frozen=True)
class SequenceModel:
    variant: str
    size: SizeConfig
    cell: object
    head: dict

    def parameters(self):
        out = self.cell.named('cell.')
        out.update({'head.' + k: v for k, v in self.head.items()})
        return out

    def replace(self, named):
        cell = self.cell.replace({k[5:]: v for k, v in named.items() if k.startswith('cell.')})
        head = {k: named.get('head.' + k, v) for k, v in self.head.items()}
        return SequenceModel(self.variant, self.size, cell, head)


@dataclass(frozen=True)
class LogRegModel:
    '''Logistic regression over the 64 flat window features.'''
    size: SizeConfig
    tensors: dict
    variant = 'logreg'

    def parameters(self):
        return dict(self.tensors)

    def replace(self, named):
        return LogRegModel(self.size, {k: named.get(k, v) for k, v in self.tensors.items()})


def build_model(variant, size=None, seed=0):
    '''
    Fresh model with seeded initialization.

    Parameters
    ----------
    variant : 'lstm', 'hyperlstm', 'mhyperlstm' or 'logreg'
    size : SizeConfig, defaults to the variant's entry in DEFAULT_SIZES
    '''
    if variant == 'logreg':
        size = size or SizeConfig(n_h=1)
        return LogRegModel(size, {'w': parameter(np.zeros((1, size.n_x))), 'b': parameter(np.zeros(1))})
    if variant not in VARIANTS:
        raise ConfigError('model', 'unknown variant {!r}, expected one of {}'.format(
            variant, ', '.join(VARIANTS + ('logreg',))))
    size = size or DEFAULT_SIZES[variant]
    rng = np.random.default_rng(seed)
    cell = cells.INITIALIZERS[variant](size, rng)
    bound1, bound2 = 1.0 / np.sqrt(size.n_h), 1.0 / np.sqrt(size.fc)
    head = {
        'W1': parameter(rng.uniform(-bound1, bound1, (size.fc, size.n_h))),
        'b1': parameter(np.zeros(size.fc)),
        'W2': parameter(rng.uniform(-bound2, bound2, (size.n_classes, size.fc))),
        'b2': parameter(np.zeros(size.n_classes)),
    }
    return SequenceModel(variant, size, cell, head)


def param_count(model):
    return int(sum(t.size for t in model.parameters().values()))


########## Section: forward ##########


def head_probs(model, h):
    hd = model.head
    hidden = relu(add(matvec(hd['W1'], h), hd['b1']))
    return softmax(add(matvec(hd['W2'], hidden), hd['b2']))


def forward_sequence(model, x_seq):
    '''
    Run the cell over a sequence from zero states.

    Parameters
    ----------
    x_seq : array [T, N_x] or [B, T, N_x], or a list of T Tensors

    Return
    ------
    list of T probability Tensors, each [K] (or [B, K])
    '''
    if isinstance(x_seq, (list, tuple)):
        steps = [x if isinstance(x, Tensor) else Tensor(x) for x in x_seq]
    else:
        arr = np.asarray(x_seq, dtype=np.float64)
        if arr.ndim not in (2, 3):
            raise DataError('sequence must be [T, N_x] or [B, T, N_x], got shape {}'.format(arr.shape))
        steps = [Tensor(arr[..., t, :]) for t in range(arr.shape[-2])]
    if not steps:
        raise DataError('cannot run an empty sequence')

    states = cells.initial_states(model.cell, steps[0].shape[:-1])
    out = []
    for x in steps:
        states = cells.advance(model.cell, states, x)
        out.append(head_probs(model, states[0].h))
    return out


def logreg_forward(model, x):
    '''sigmoid(w . x + b) for x of shape [..., 64]; returns shape [...].'''
    x = x if isinstance(x, Tensor) else Tensor(x)
    p = sigmoid(add(matvec(model.tensors['w'], x), model.tensors['b']))
    return reshape(p, p.shape[:-1])


########## Section: loss ##########


def smoothed_targets(label, n_classes=2, eps=0.2):
    '''
    Smoothed target distribution: 1 - eps + eps/K on `label`, eps/K elsewhere.
    `label` may be an int or an int array (one row per label).
    '''
    labels = np.asarray(label)
    if not 0 <= eps < 1:
        raise ValueError('label smoothing must lie in [0, 1), got {}'.format(eps))
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError('label {} out of range for {} classes'.format(label, n_classes))
    onehot = np.eye(n_classes)[labels.astype(int)]
    return onehot * (1.0 - eps) + eps / n_classes


def step_weights(T):
    '''exp(t - T) for t = 1..T; the last weight is exactly 1.'''
    return np.exp(np.arange(1, T + 1, dtype=np.float64) - T)


def is_weight(name):
    return name.rsplit('.', 1)[-1][:1] in ('W', 'I', 'w')


def l2_penalty(params):
    terms = [total(mul(t, t)) for name, t in params.items() if is_weight(name)]
    out = terms[0]
    for t in terms[1:]:
        out = add(out, t)
    return out


def sequence_loss(probs, label, eps=0.2, l2=0.0, params=None):
    '''
    Sum over steps of exp(t - T) H(target, p_t), averaged over the batch,
    plus l2 times the squared norm of every weight matrix (biases and
    layer-norm parameters excluded).

    Parameters
    ----------
    probs : list of T Tensors, [K] or [B, K]
    label : class index, or int array [B]
    params : dict of named parameters, needed when l2 > 0
    '''
    if not probs:
        raise DataError('cannot score an empty sequence')
    n_classes = probs[0].shape[-1]
    targets = smoothed_targets(label, n_classes, eps)
    if targets.shape != probs[0].shape:
        raise DataError('targets {} do not match predictions {}'.format(targets.shape, probs[0].shape))
    batch = probs[0].shape[0] if probs[0].ndim == 2 else 1
    weights = step_weights(len(probs))

    loss = None
    for w, p in zip(weights, probs):
        term = total(mul(log(p), targets * (-w / batch)))
        loss = term if loss is None else add(loss, term)
    if l2 and params:
        loss = add(loss, mul(l2_penalty(params), l2))
    return loss


def logreg_loss(model, x, label, eps=0.2, l2=0.0):
    '''Smoothed binary cross-entropy averaged over rows, plus the L2 term.'''
    p = logreg_forward(model, x)
    t = smoothed_targets(label, 2, eps)[..., 1]
    n = p.shape[0] if p.ndim else 1
    loss = add(total(mul(log(p), t * (-1.0 / n))), total(mul(log(sub(1.0, p)), (1.0 - t) * (-1.0 / n))))
    if l2:
        loss = add(loss, mul(l2_penalty(model.parameters()), l2))
    return loss


def batch_loss(model, x, y, eps, l2):
    if model.variant == 'logreg':
        return logreg_loss(model, x, y, eps, l2)
    return sequence_loss(forward_sequence(model, x), y, eps, l2, model.parameters())


def mean_loss(model, x, y, eps):
    '''Mean per-example loss over a whole split, no L2, no graph.'''
    n = len(y)
    acc = 0.0
    with no_grad():
        for start in range(0, n, EVAL_BATCH):
            sl = slice(start, start + EVAL_BATCH)
            acc += batch_loss(model, x[sl], y[sl], eps, 0.0).item() * len(y[sl])
    return acc / n


def mean_step_cross_entropy(model, x, y, eps=0.2):
    '''Unweighted mean of H(target, p_t) over every step of every sequence.'''
    targets = smoothed_targets(y, model.size.n_classes, eps)
    with no_grad():
        probs = forward_sequence(model, x)
    ce = [-(targets * np.log(np.maximum(p.data, 1e-12))).sum(axis=-1) for p in probs]
    return float(np.mean(ce))


########## Section: optimizer ##########


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def fresh(cls, params):
        return cls({k: np.zeros_like(t.data) for k, t in params.items()},
                   {k: np.zeros_like(t.data) for k, t in params.items()})


def adam_step(params, grads, state, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    '''
    One bias-corrected Adam update.

    Parameters
    ----------
    params : dict name -> Tensor
    grads : dict name -> ndarray, same shapes
    state : AdamState, not modified

    Return
    ------
    (new params dict, new AdamState)
    '''
    t = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise GradientError('gradient for {} has shape {}, parameter has {}'.format(name, g.shape, p.shape))
        if not np.isfinite(g).all():
            raise GradientError('non-finite gradient for parameter ' + name)
        m = beta1 * state.m[name] + (1 - beta1) * g
        v = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_params[name] = parameter(p.data - lr * m_hat / (np.sqrt(v_hat) + eps))
        m_new[name], v_new[name] = m, v
    return new_params, AdamState(m_new, v_new, t)


########## Section: training ##########


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 50
    label_smoothing: float = 0.2
    l2: float = 1e-4
    batch_size: int = 32
    seed: int = 0
    verbose: bool = False

    def validate(self):
        if not self.lr > 0:
            raise ConfigError('lr', 'learning rate must be positive, got {}'.format(self.lr))
        if not 0 <= self.label_smoothing < 1:
            raise ConfigError('label_smoothing', 'must lie in [0, 1), got {}'.format(self.label_smoothing))
        if self.epochs < 1:
            raise ConfigError('epochs', 'need at least one epoch, got {}'.format(self.epochs))
        if self.batch_size < 1:
            raise ConfigError('batch_size', 'must be positive, got {}'.format(self.batch_size))
        if self.l2 < 0:
            raise ConfigError('l2', 'must be non-negative, got {}'.format(self.l2))
        return self


@dataclass
class TrainResult:
    '''
    The model of the epoch with the lowest validation loss and the loss
    history (one row per epoch, epoch 0 being the untrained model).
    '''
    model: object
    epoch: int
    val_loss: float
    history: pd.DataFrame = field(default_factory=pd.DataFrame)

    @property
    def meta(self):
        return {'epoch': float(self.epoch), 'val_loss': float(self.val_loss)}


def train(model, train_set, val_set, cfg=None):
    '''
    Mini-batch Adam over seeded shuffles with model selection on the
    validation loss; ties keep the earlier epoch.

    Parameters
    ----------
    model : SequenceModel or LogRegModel
    train_set, val_set : (features, labels) pairs. Features are [N, T, 64] for
        sequence models and [N, 64] for logistic regression.
    cfg : TrainConfig

    Return
    ------
    TrainResult
    '''
    cfg = (cfg or TrainConfig()).validate()
    x_tr, y_tr = np.asarray(train_set[0], dtype=np.float64), np.asarray(train_set[1], dtype=int)
    x_va, y_va = np.asarray(val_set[0], dtype=np.float64), np.asarray(val_set[1], dtype=int)
    if len(y_tr) == 0 or len(y_va) == 0:
        raise DataError('training needs non-empty train and validation splits')

    eps = cfg.label_smoothing
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    names = list(params)
    state = AdamState.fresh(params)

    val0 = mean_loss(model, x_va, y_va, eps)
    rows = [{'epoch': 0, 'train_loss': mean_loss(model, x_tr, y_tr, eps), 'val_loss': val0}]
    best = TrainResult(model, 0, val0)
    logger.info('%s: initial train loss %.4f, val loss %.4f', model.variant, rows[0]['train_loss'], val0)

    for epoch in tqdm(range(1, cfg.epochs + 1), desc=model.variant, disable=not cfg.verbose):
        order = rng.permutation(len(y_tr))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = batch_loss(model, x_tr[idx], y_tr[idx], eps, cfg.l2)
            if not np.isfinite(loss.item()):
                raise TrainingDiverged('loss became {} in epoch {}'.format(loss.item(), epoch), best)
            grads = gradients(loss, [params[k] for k in names])
            try:
                params, state = adam_step(params, dict(zip(names, grads)), state, cfg.lr)
            except GradientError as err:
                raise TrainingDiverged('{} in epoch {}'.format(err, epoch), best) from err
            model = model.replace(params)

        row = {'epoch': epoch, 'train_loss': mean_loss(model, x_tr, y_tr, eps),
               'val_loss': mean_loss(model, x_va, y_va, eps)}
        if not np.isfinite(row['val_loss']):
            raise TrainingDiverged('validation loss became {} in epoch {}'.format(row['val_loss'], epoch), best)
        rows.append(row)
        logger.debug('%s epoch %d: train %.4f val %.4f', model.variant, epoch, row['train_loss'], row['val_loss'])
        if best.epoch == 0 or row['val_loss'] < best.val_loss:
            best = TrainResult(model, epoch, row['val_loss'])

    best.history = pd.DataFrame(rows, columns=['epoch', 'train_loss', 'val_loss'])
    logger.info('%s: selected epoch %d (val loss %.4f)', model.variant, best.epoch, best.val_loss)
    return best


########## Section: scoring ##########


def predict_window(model, window):
    '''Positive-class probability of one window (final step for sequence models).'''
    with no_grad():
        if model.variant == 'logreg':
            return float(logreg_forward(model, window).data)
        return float(forward_sequence(model, window)[-1].data[1])


def predict_scores(model, x):
    '''
    One score per window, computed window by window so the result matches
    the streaming path exactly.
    '''
    return np.array([predict_window(model, w) for w in np.asarray(x, dtype=np.float64)])

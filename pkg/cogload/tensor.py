'''
Dense float64 tensors with reverse-mode differentiation.

Every operation returns a new Tensor. When gradient recording is enabled and
one of the operands requires a gradient, the result keeps a reference to its
operands and a closure that maps the output gradient to operand gradients.
`gradients()` replays that record backward. `grad_check()` compares the
replayed gradients against central finite differences.
'''

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import GradientError, ShapeError

logger = logging.getLogger(__name__)

LN_EPS = 1e-5
LOG_FLOOR = 1e-12

_mode = threading.local()


def is_grad_enabled():
    return getattr(_mode, 'enabled', True)


@contextmanager
def no_grad():
    '''
    Stop recording operations on the current thread.
    '''
    previous = is_grad_enabled()
    _mode.enabled = False
    try:
        yield
    finally:
        _mode.enabled = previous


class Tensor:
    '''
    Immutable n-dimensional array of doubles.

    Parameters
    ----------
    data : array-like, converted to a float64 ndarray
    requires_grad : whether gradients should flow into this tensor
    '''

    __slots__ = ('data', 'requires_grad', 'op', 'parents', 'backward_fn')

    def __init__(self, data, requires_grad=False, op='leaf', parents=(), backward_fn=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr is data and arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return 'Tensor(shape={}, op={})'.format(self.shape, self.op)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    '''A leaf tensor that receives gradients.'''
    return Tensor(data, requires_grad=True)


def _record(data, op, parents, backward_fn):
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, parents=parents, backward_fn=backward_fn)
    return Tensor(data, op=op)


def _unbroadcast(g, shape):
    '''Sum a broadcast gradient back down to `shape`.'''
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError('{}: incompatible shapes {} and {}'.format(op, a.shape, b.shape))


########## Section: linear algebra ##########


def matmul(a, b):
    '''
    Matrix product a[..., m, k] @ b[..., k, n].
    '''
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul: cannot multiply {} by {}'.format(a.shape, b.shape))
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(out, 'matmul', (a, b), backward)


def matvec(w, v):
    '''
    Matrix-vector product w[..., m, n] · v[..., n] -> [..., m].

    A 2-D `w` is shared across any leading axes of `v`; a stacked `w`
    (one matrix per batch row) is multiplied row by row.
    '''
    w, v = as_tensor(w), as_tensor(v)
    if w.ndim < 2 or v.ndim < 1 or w.shape[-1] != v.shape[-1]:
        raise ShapeError('matvec: cannot multiply {} by {}'.format(w.shape, v.shape))

    if w.ndim == 2:
        out = v.data @ w.data.T

        def backward(g):
            gw = g.reshape(-1, w.shape[0]).T @ v.data.reshape(-1, w.shape[1])
            return gw, g @ w.data
    else:
        out = np.matmul(w.data, v.data[..., None])[..., 0]

        def backward(g):
            gw = g[..., :, None] * v.data[..., None, :]
            gv = np.matmul(np.swapaxes(w.data, -1, -2), g[..., None])[..., 0]
            return _unbroadcast(gw, w.shape), _unbroadcast(gv, v.shape)

    return _record(out, 'matvec', (w, v), backward)


def mode3_contract(w, z):
    '''
    Contract the last axis of w[a, b, N_z] with z[..., N_z] -> [..., a, b].
    '''
    w, z = as_tensor(w), as_tensor(z)
    if w.ndim != 3 or z.ndim < 1 or w.shape[2] != z.shape[-1]:
        raise ShapeError('mode3_contract: cannot contract {} with {}'.format(w.shape, z.shape))
    out = np.tensordot(z.data, w.data, axes=([z.ndim - 1], [2]))

    def backward(g):
        if z.ndim == 1:
            gw = g[..., None] * z.data
        else:
            batch = list(range(z.ndim - 1))
            gw = np.tensordot(g, z.data, axes=(batch, batch))
        gz = np.tensordot(g, w.data, axes=([g.ndim - 2, g.ndim - 1], [0, 1]))
        return gw, gz

    return _record(out, 'mode3_contract', (w, z), backward)


########## Section: element-wise ##########


def _unary(fn, x):
    if fn == 'sigmoid':
        y = expit(x.data)
        return y, lambda g: (g * y * (1.0 - y),)
    if fn == 'tanh':
        y = np.tanh(x.data)
        return y, lambda g: (g * (1.0 - y * y),)
    if fn == 'relu':
        y = np.maximum(x.data, 0.0)
        return y, lambda g: (g * (x.data > 0),)
    if fn == 'exp':
        y = np.exp(x.data)
        return y, lambda g: (g * y,)
    if fn == 'log':
        clamped = x.data > LOG_FLOOR
        y = np.log(np.maximum(x.data, LOG_FLOOR))
        return y, lambda g: (np.where(clamped, g / np.where(clamped, x.data, 1.0), 0.0),)
    raise ValueError('unknown element-wise function ' + fn)


def _binary(fn, a, b):
    _broadcast_shape(fn, a, b)
    if fn == 'add':
        y = a.data + b.data
        return y, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    if fn == 'sub':
        y = a.data - b.data
        return y, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    if fn == 'mul':
        y = a.data * b.data
        return y, lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))
    raise ValueError('unknown element-wise function ' + fn)


def elementwise(x, fn, other=None):
    '''
    Apply `fn` per element.

    fn : one of sigmoid, tanh, relu, exp, log (unary) or add, sub, mul (binary).
    Binary operands must have equal shapes or numpy-broadcastable ones
    (a bias vector against a batch of rows).
    '''
    x = as_tensor(x)
    if other is None:
        y, backward = _unary(fn, x)
        return _record(y, fn, (x,), backward)
    other = as_tensor(other)
    y, backward = _binary(fn, x, other)
    return _record(y, fn, (x, other), backward)


def sigmoid(x):
    return elementwise(x, 'sigmoid')


def tanh(x):
    return elementwise(x, 'tanh')


def relu(x):
    return elementwise(x, 'relu')


def exp(x):
    return elementwise(x, 'exp')


def log(x):
    '''Natural log with the argument clamped at 1e-12.'''
    return elementwise(x, 'log')


def add(a, b):
    return elementwise(a, 'add', b)


def sub(a, b):
    return elementwise(a, 'sub', b)


def mul(a, b):
    return elementwise(a, 'mul', b)


########## Section: normalization ##########


def softmax(logits):
    '''
    Softmax over the last axis, computed after subtracting the row maximum.
    '''
    logits = as_tensor(logits)
    if logits.ndim < 1 or logits.shape[-1] < 2:
        raise ShapeError('softmax: need at least 2 classes, got shape {}'.format(logits.shape))
    e = np.exp(logits.data - logits.data.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record(y, 'softmax', (logits,), backward)


def layer_norm(x, gain, bias, eps=LN_EPS):
    '''
    Normalize the last axis to zero mean and unit (population) variance,
    then scale by `gain` and shift by `bias`.
    '''
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1] if x.ndim else 0
    if n < 2 or gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError('layer_norm: input {} with gain {} and bias {}'.format(
            x.shape, gain.shape, bias.shape))
    if eps <= 0:
        raise ValueError('layer_norm eps must be positive')

    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * rstd
    y = gain.data * xhat + bias.data

    def backward(g):
        gxhat = g * gain.data
        gx = rstd * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                     - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _record(y, 'layer_norm', (x, gain, bias), backward)


########## Section: shape plumbing ##########


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError('concat: incompatible shapes {}'.format([t.shape for t in tensors]))
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(out, 'concat', tuple(tensors), backward)


def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return _record(out, 'reshape', (x,), lambda g: (g.reshape(x.shape),))


def total(x):
    '''Sum of all elements as a 0-d tensor.'''
    x = as_tensor(x)
    return _record(np.asarray(x.data.sum()), 'sum', (x,),
                   lambda g: (np.broadcast_to(g, x.shape).copy(),))


########## Section: reverse mode ##########


def _topological_order(output):
    order, seen = [], set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradients(output, inputs, check_finite=False):
    '''
    Reverse-mode gradients of `output` with respect to each of `inputs`.

    A non-scalar output is seeded with ones. Inputs that do not influence the
    output receive zeros. With `check_finite`, the first op whose backward
    step yields a non-finite gradient raises GradientError naming that op.

    Return
    ------
    list of ndarrays, one per input, each shaped like that input
    '''
    wanted = {id(t) for t in inputs}
    grads = {}
    if output.requires_grad:
        grads[id(output)] = np.ones_like(output.data)
        for node in reversed(_topological_order(output)):
            g = grads.get(id(node)) if id(node) in wanted else grads.pop(id(node), None)
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if check_finite and not np.isfinite(pg).all():
                    raise GradientError('non-finite gradient produced by {} (flowing into {})'.format(
                        node.op, parent.op))
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
    return [np.array(grads[id(t)], dtype=np.float64) if id(t) in grads
            else np.zeros_like(t.data) for t in inputs]


@dataclass
class GradCheckReport:
    '''
    Outcome of a finite-difference gradient check.
    '''
    op: str
    max_rel_error: float
    per_input: list = field(default_factory=list)
    tol: float = 1e-4

    @property
    def passed(self):
        return self.max_rel_error <= self.tol


def grad_check(fn, inputs, step=1e-5, tol=1e-4, seed=0):
    '''
    Compare analytic gradients of `fn` with central finite differences.

    Parameters
    ----------
    fn : callable taking Tensors (one per input) and returning a Tensor.
        Non-scalar outputs are reduced with a fixed random projection.
    inputs : list of arrays
    step : finite-difference step, within [1e-6, 1e-4]
    tol : relative error accepted by `report.passed`

    Return
    ------
    GradCheckReport with the max relative error |a-n| / (|a|+|n|+1e-8)
    '''
    if not 1e-6 <= step <= 1e-4:
        raise ValueError('grad_check step must lie in [1e-6, 1e-4], got {}'.format(step))
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    if not all(np.isfinite(a).all() for a in arrays):
        raise ValueError('grad_check inputs must be finite')

    leaves = [parameter(a) for a in arrays]
    out = fn(*leaves)
    projection = np.random.default_rng(seed).standard_normal(out.shape)
    analytic = gradients(total(mul(out, projection)), leaves, check_finite=True)

    def evaluate(values):
        with no_grad():
            return float((fn(*[Tensor(v) for v in values]).data * projection).sum())

    errors = []
    for i, a in enumerate(arrays):
        numeric = np.zeros_like(a)
        flat = numeric.reshape(-1)
        for j in range(a.size):
            plus, minus = [x.copy() for x in arrays], [x.copy() for x in arrays]
            plus[i].reshape(-1)[j] += step
            minus[i].reshape(-1)[j] -= step
            flat[j] = (evaluate(plus) - evaluate(minus)) / (2 * step)
        rel = np.abs(analytic[i] - numeric) / (np.abs(analytic[i]) + np.abs(numeric) + 1e-8)
        errors.append(float(rel.max()) if rel.size else 0.0)

    report = GradCheckReport(op=out.op, max_rel_error=max(errors) if errors else 0.0,
                             per_input=errors, tol=tol)
    logger.debug('grad_check %s: max relative error %.3e', report.op, report.max_rel_error)
    return report

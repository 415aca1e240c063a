"""
The :mod:`tensor` module provides dense float64 tensors and a
reverse-mode automatic differentiation engine.

A :class:`Tape` records every operation applied to tensors that
descend from a watched leaf while the tape is active: ::

    with Tape() as tape:
        x = tape.watch(x0)
        loss = softmax_cross_entropy(model.predict_logits(x), labels)
    gradient = backward(tape, loss)
    gradient[x]  # same shape as x

Operations on tensors not descending from a leaf of the innermost
active tape are evaluated without being recorded.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
from contextlib import contextmanager
import threading
import numpy as np


class ContractError(ValueError):
    """Raised when the arguments of an operation violate its precondition."""

class DimensionError(ContractError):
    """Raised when operand shapes are incompatible."""

class NonFiniteError(ArithmeticError):
    """Raised when an operation produces NaN or infinity."""


class Tensor:
    """
    An immutable dense tensor of 64-bit floats.

    :ivar data: (:class:`numpy.ndarray`) read-only row-major values
    :ivar tape: (:class:`Tape` or None) tape this tensor is recorded on
    :ivar node: (integer or None) index of the recording node in ``tape``
    """

    def __init__(self, data):
        array = np.array(data, dtype=np.float64)
        array.setflags(write=False)
        self.data, self.tape, self.node = array, None, None

    @classmethod
    def _wrap(cls, array, tape=None, node=None):
        tensor = cls.__new__(cls)
        if array.dtype != np.float64:
            array = array.astype(np.float64)
        array.setflags(write=False)
        tensor.data, tensor.tape, tensor.node = array, tape, node
        return tensor

    def __repr__(self):
        return "Tensor(shape=%s, %s)" % (self.shape, np.array2string(self.data, threshold=8))

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        """Returns a writable copy of the values."""
        return self.data.copy()

    def item(self):
        return float(self.data)

    def detach(self):
        """Returns the same values, not recorded on any tape."""
        return Tensor._wrap(self.data)

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = shape[0]
        return reshape(self, tuple(shape))

    def sum(self, axis=None):
        return sum(self, axis=axis)

    def mean(self):
        return mean(self)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Node:
    """
    A record of one operation on a :class:`Tape`.

    :ivar op: (:class:`Op` or None) the operation; None for leaves
    :ivar parents: (tuple of integer or None) node index of every input,
        or None for inputs that are constants with respect to the tape
    :ivar inputs: (tuple of :class:`numpy.ndarray`) forward input values
    :ivar attrs: (dictionary) non-tensor arguments of the operation
    :ivar value: (:class:`numpy.ndarray`) forward output
    """
    __slots__ = ("op", "parents", "inputs", "attrs", "value")

    def __init__(self, op, parents, inputs, attrs, value):
        self.op, self.parents, self.inputs, self.attrs, self.value = \
            op, parents, inputs, attrs, value

    @property
    def kind(self):
        return "leaf" if self.op is None else self.op.kind


_state = threading.local()

def _stack():
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes

def active_tape():
    """Returns the innermost active :class:`Tape` of this thread, or None."""
    stack = _stack()
    return stack[-1] if stack else None

@contextmanager
def no_record():
    """A context manager that suspends recording on this thread."""
    stack = _stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tape:
    """
    A dynamically built computation graph. Nodes are appended in
    evaluation order, so every parent precedes its children.

    A tape belongs to the thread that entered it.

    :ivar nodes: (list of :class:`Node`) recorded operations
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc_info):
        _stack().pop()

    def __len__(self):
        return len(self.nodes)

    def watch(self, tensor):
        """
        Returns a copy of ``tensor`` recorded as a leaf of this tape.
        Gradients are computed with respect to leaves.
        """
        tensor = as_tensor(tensor)
        return self._record(None, (), (), {}, tensor.data)

    def _record(self, op, parents, inputs, attrs, value):
        self.nodes.append(Node(op, parents, inputs, attrs, value))
        return Tensor._wrap(value, self, len(self.nodes) - 1)

    def replay(self):
        """
        Re-evaluates every recorded operation from the leaf values and
        returns the list of node outputs, in node order.
        """
        values = []
        for node in self.nodes:
            if node.op is None:
                values.append(node.value)
                continue
            arguments = [values[parent] if parent is not None else value
                         for parent, value in zip(node.parents, node.inputs)]
            values.append(node.op.forward(*arguments, **node.attrs))
        return values

    def gradient(self, output):
        """Shorthand for :func:`backward` on this tape."""
        return backward(self, output)


class Gradient:
    """
    Gradients of a scalar with respect to the leaves of a tape.
    Indexing with a leaf tensor returns a :class:`Tensor` of the
    leaf's shape; leaves the output does not depend on have zero gradient.
    """

    def __init__(self, tape, grads):
        self.tape = tape
        self._grads = grads

    def __getitem__(self, leaf):
        if leaf.tape is not self.tape or leaf.node is None or \
                self.tape.nodes[leaf.node].op is not None:
            raise ContractError("tensor is not a leaf of this tape")
        grad = self._grads.get(leaf.node)
        if grad is None:
            return Tensor._wrap(np.zeros(leaf.shape))
        return Tensor._wrap(grad)

    def __contains__(self, leaf):
        return leaf.tape is self.tape and leaf.node in self._grads


def backward(tape, output):
    """
    Computes the gradient of the scalar ``output`` with respect to
    every leaf of ``tape`` by reverse traversal. The tape is left
    unchanged, so repeated calls give identical results.

    :param tape: (:class:`Tape`) tape ``output`` is recorded on
    :param output: (:class:`Tensor`) zero-dimensional tensor
    :return: (:class:`Gradient`)
    :raise: :class:`ContractError` if ``output`` is not a scalar
        recorded on ``tape``
    """
    if output.tape is not tape or output.node is None:
        raise ContractError("output is not recorded on this tape")
    if output.shape != ():
        raise ContractError("backward requires a scalar output, got shape %s" %
                            (output.shape,))

    pending = {output.node: np.ones(())}
    leaves = {}
    for index in range(output.node, -1, -1):
        upstream = pending.pop(index, None)
        if upstream is None:
            continue

        node = tape.nodes[index]
        if node.op is None:
            leaves[index] = upstream
            continue

        grads = node.op.backward(upstream, node.value, *node.inputs, **node.attrs)
        for parent, value, grad in zip(node.parents, node.inputs, grads):
            if parent is None or grad is None:
                continue
            if grad.shape != value.shape:
                raise ContractError("backward of {kind} produced shape {actual}, "
                                    "expected {expected}".format(
                                        kind=node.op.kind, actual=grad.shape,
                                        expected=value.shape))
            if parent in pending:
                pending[parent] = pending[parent] + grad
            else:
                pending[parent] = grad
    return Gradient(tape, leaves)


class Op:
    """
    A differentiable primitive.

    :ivar kind: (string) operation name, recorded on the tape
    :ivar forward: (callable) ``forward(*arrays, **attrs)`` returning
        the output array
    :ivar backward: (callable) ``backward(upstream, output, *arrays, **attrs)``
        returning one gradient array (or None) per input array
    :ivar check_finite: (bool) whether to reject non-finite outputs
    """

    def __init__(self, kind, forward, backward, check_finite=True):
        self.kind, self.forward, self.backward, self.check_finite = \
            kind, forward, backward, check_finite

    def __repr__(self):
        return "Op(%s)" % self.kind

    def __call__(self, *inputs, **attrs):
        tensors = [as_tensor(value) for value in inputs]
        arrays = tuple(tensor.data for tensor in tensors)
        value = np.asarray(self.forward(*arrays, **attrs), dtype=np.float64)
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError("%s produced a non-finite value" % self.kind)

        tape = active_tape()
        if tape is not None and any(tensor.tape is tape for tensor in tensors):
            parents = tuple(tensor.node if tensor.tape is tape else None
                            for tensor in tensors)
            return tape._record(self, parents, arrays, attrs, value)
        return Tensor._wrap(value)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad

def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError("cannot broadcast shapes %s and %s" % (a.shape, b.shape))

def _add_forward(a, b):
    _broadcast_shape(a, b)
    return a + b

def _sub_forward(a, b):
    _broadcast_shape(a, b)
    return a - b

def _mul_forward(a, b):
    _broadcast_shape(a, b)
    return a * b

def _div_forward(a, b):
    _broadcast_shape(a, b)
    return a / b

add = Op("add", _add_forward,
         lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
sub = Op("sub", _sub_forward,
         lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
mul = Op("mul", _mul_forward,
         lambda g, out, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)))
div = Op("div", _div_forward,
         lambda g, out, a, b: (_unbroadcast(g / b, a.shape),
                               _unbroadcast(-g * a / (b * b), b.shape)))
neg = Op("neg", lambda a: -a, lambda g, out, a: (-g,))
square = Op("square", lambda a: a * a, lambda g, out, a: (2.0 * a * g,))
tanh = Op("tanh", np.tanh, lambda g, out, a: (g * (1.0 - out * out),))


def _relu_backward(g, out, a):
    # Subgradient at exactly 0 is 0.
    return (np.where(a > 0, g, 0.0),)

relu = Op("relu", lambda a: np.maximum(a, 0.0), _relu_backward)
relu.__doc__ = """
Elementwise ``max(0, x)``. The gradient passes where ``x > 0``
and is zero elsewhere, including at ``x == 0``.
"""


def _sum_forward(a, axis=None):
    return np.sum(a, axis=axis)

def _sum_backward(g, out, a, axis=None):
    if axis is not None:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)

_sum = Op("sum", _sum_forward, _sum_backward)

def sum(x, axis=None):
    """
    Sums ``x`` over ``axis`` (an integer or tuple of integers),
    or over all elements when ``axis`` is None.
    """
    if isinstance(axis, list):
        axis = tuple(axis)
    return _sum(x, axis=axis)

mean = Op("mean", lambda a: np.sum(a) / a.size,
          lambda g, out, a: (np.full(a.shape, g / a.size),))


def _reshape_forward(a, shape):
    if int(np.prod(shape)) != a.size:
        raise DimensionError("cannot reshape %s into %s" % (a.shape, shape))
    return a.reshape(shape)

_reshape = Op("reshape", _reshape_forward,
              lambda g, out, a, shape: (g.reshape(a.shape),))

def reshape(x, shape):
    return _reshape(x, shape=tuple(int(dim) for dim in shape))


def matmul(a, b):
    """
    Matrix product of ``a`` (m x k) and ``b`` (k x n).

    :raise: :class:`DimensionError` naming both shapes if the
        operands are not matrices with agreeing inner dimensions
    """
    return _matmul(a, b)

def _matmul_forward(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("cannot multiply matrices of shapes %s and %s" %
                             (a.shape, b.shape))
    return a @ b

_matmul = Op("matmul", _matmul_forward,
             lambda g, out, a, b: (g @ b.T, a.T @ g))


def reflect_indices(size, before, after):
    """Source index of every position of a reflect-padded axis of length ``size``."""
    return np.pad(np.arange(size), (before, after), mode="reflect")

def _pad_forward(a, pads):
    index = [slice(None)] * (a.ndim - 2)
    rows = reflect_indices(a.shape[-2], *pads[0])
    cols = reflect_indices(a.shape[-1], *pads[1])
    return a[tuple(index) + (rows[:, None], cols[None, :])]

def _pad_backward(g, out, a, pads):
    grad = np.zeros(a.shape)
    index = [slice(None)] * (a.ndim - 2)
    rows = reflect_indices(a.shape[-2], *pads[0])
    cols = reflect_indices(a.shape[-1], *pads[1])
    # Move the spatial axes first so that add.at scatters whole planes.
    target = np.moveaxis(grad, (-2, -1), (0, 1))
    np.add.at(target, (rows[:, None], cols[None, :]),
              np.moveaxis(g, (-2, -1), (0, 1)))
    return (grad,)

_pad_reflect = Op("pad_reflect", _pad_forward, _pad_backward)

def pad_reflect(x, pads):
    """
    Pads the last two axes of ``x`` by reflection without repeating
    the edge, e.g. ``[1, 2, 3]`` padded by one becomes ``[2, 1, 2, 3, 2]``.

    :param pads: ((before, after), (before, after)) for rows and columns
    """
    pads = tuple((int(before), int(after)) for before, after in pads)
    for (before, after), size in zip(pads, x.shape[-2:]):
        if max(before, after) >= size:
            raise DimensionError("cannot reflect-pad size %d by %d" %
                                 (size, max(before, after)))
    return _pad_reflect(x, pads=pads)


def _conv_windows(x, kh, kw, stride, padding):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return windows[:, :, ::stride, ::stride]

def _conv_check(x, w, stride, padding):
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError("cannot convolve input of shape %s with kernel of shape %s" %
                             (x.shape, w.shape))
    if stride < 1 or padding < 0:
        raise ContractError("stride must be positive and padding non-negative")
    if w.shape[2] > x.shape[2] + 2 * padding or w.shape[3] > x.shape[3] + 2 * padding:
        raise DimensionError("kernel of shape %s exceeds input of shape %s padded by %d" %
                             (w.shape, x.shape, padding))

def _conv_forward(x, w, stride, padding):
    _conv_check(x, w, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    f, c, kh, kw = w.shape
    ho = (x.shape[2] - kh) // stride + 1
    wo = (x.shape[3] - kw) // stride + 1
    # Taps are summed in the same (channel, row, column) order as conv2d_direct,
    # so both give bitwise equal results.
    out = np.zeros((x.shape[0], f, ho, wo))
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                tap = x[:, ch, i:i + stride * (ho - 1) + 1:stride,
                        j:j + stride * (wo - 1) + 1:stride]
                out += tap[:, None] * w[:, ch, i, j][None, :, None, None]
    return out

def _conv_backward(g, out, x, w, stride, padding):
    kh, kw = w.shape[2], w.shape[3]
    windows = _conv_windows(x, kh, kw, stride, padding)
    dw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))

    n, c, h, wd = x.shape
    ho, wo = g.shape[2], g.shape[3]
    dxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            contribution = np.tensordot(g, w[:, :, i, j], axes=([1], [0]))
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                contribution.transpose(0, 3, 1, 2)
    dx = dxp[:, :, padding:padding + h, padding:padding + wd]
    return (dx, dw)

_conv2d = Op("conv2d", _conv_forward, _conv_backward)

def conv2d(x, w, stride=1, padding=0):
    """
    Cross-correlation of ``x`` (N x C x H x W) with ``w`` (F x C x kh x kw)
    with zero padding. The output has spatial size
    ``(H + 2 * padding - kh) // stride + 1`` by the same rule for width.
    """
    return _conv2d(x, w, stride=int(stride), padding=int(padding))

def conv2d_direct(x, w, stride=1, padding=0):
    """
    Loop reference for :func:`conv2d` on plain arrays; not recorded.
    """
    x, w = np.asarray(x, dtype=np.float64), np.asarray(w, dtype=np.float64)
    _conv_check(x, w, stride, padding)
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, f, ho, wo))
    for b in range(n):
        for o in range(f):
            for r in range(ho):
                for s in range(wo):
                    total = 0.0
                    for ch in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                total += xp[b, ch, r * stride + i, s * stride + j] * w[o, ch, i, j]
                    out[b, o, r, s] = total
    return out


def _check_labels(logits, labels):
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError("logits of shape %s do not match labels of shape %s" %
                             (logits.shape, labels.shape))
    bad = (labels < 0) | (labels >= logits.shape[1])
    if np.any(bad):
        raise IndexError("label %d out of range for %d classes" %
                         (labels[bad][0], logits.shape[1]))

def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)

def _xent_forward(logits, labels):
    _check_labels(logits, labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    return np.sum(log_norm - picked) / len(labels)

def _xent_backward(g, out, logits, labels):
    grad = _softmax(logits)
    grad[np.arange(len(labels)), labels] -= 1.0
    return (grad * (g / len(labels)),)

_softmax_cross_entropy = Op("softmax_cross_entropy", _xent_forward, _xent_backward)

def softmax_cross_entropy(logits, labels):
    """
    Mean over the batch of ``-log softmax(logits)[label]``, computed
    after subtracting the row maximum so that large logits do not overflow.

    :param logits: (:class:`Tensor`) N x K scores
    :param labels: (sequence of int) N class indices in [0, K)
    :raise: :exc:`IndexError` if a label is out of range
    """
    return _softmax_cross_entropy(logits, labels=np.asarray(labels, dtype=np.int64))

def softmax(logits):
    """Row-wise softmax of a plain array; not recorded."""
    return _softmax(np.asarray(logits, dtype=np.float64))


def _mse_forward(pred, target):
    if pred.shape != target.shape:
        raise DimensionError("cannot compare shapes %s and %s" % (pred.shape, target.shape))
    diff = pred - target
    return np.sum(diff * diff) / diff.size

def _mse_backward(g, out, pred, target):
    grad = 2.0 * (pred - target) / pred.size * g
    return (grad, -grad)

mse = Op("mse", _mse_forward, _mse_backward)
mse.__doc__ = "Mean of squared elementwise differences of equally shaped tensors."


def _runner_up(logits, labels):
    masked = logits.copy()
    masked[np.arange(len(labels)), labels] = -np.inf
    return masked.argmax(axis=1)

def _margin_forward(logits, labels):
    _check_labels(logits, labels)
    if logits.shape[1] < 2:
        raise DimensionError("margin needs at least two classes, got %s" % (logits.shape,))
    rows = np.arange(len(labels))
    return logits[rows, labels] - logits[rows, _runner_up(logits, labels)]

def _margin_backward(g, out, logits, labels):
    rows = np.arange(len(labels))
    grad = np.zeros(logits.shape)
    grad[rows, labels] += g
    grad[rows, _runner_up(logits, labels)] -= g
    return (grad,)

_margin = Op("margin", _margin_forward, _margin_backward)

def margin(logits, labels):
    """
    Per-example ``Z[label] - max over k != label of Z[k]``; positive
    when the label wins. Ties for the runner-up go to the lowest index.
    """
    return _margin(logits, labels=np.asarray(labels, dtype=np.int64))


def finite_diff_grad(f, x, h=1e-5):
    """
    Central finite-difference gradient of the scalar function ``f`` at ``x``:
    ``(f(x + h e_i) - f(x - h e_i)) / 2h`` per coordinate. Nothing is recorded.

    :param f: (callable) maps a :class:`Tensor` to a scalar :class:`Tensor` or float
    :return: (:class:`Tensor`) gradient of the same shape as ``x``
    """
    if not h > 0:
        raise ContractError("finite difference step must be positive, got %r" % (h,))

    def evaluate(values):
        result = f(Tensor._wrap(values))
        return float(result.data) if isinstance(result, Tensor) else float(result)

    base = as_tensor(x).data
    flat = base.reshape(-1)
    grad = np.zeros(flat.shape)
    with no_record():
        for i in range(flat.size):
            plus, minus = flat.copy(), flat.copy()
            plus[i] += h
            minus[i] -= h
            grad[i] = (evaluate(plus.reshape(base.shape)) -
                       evaluate(minus.reshape(base.shape))) / (2 * h)
    return Tensor._wrap(grad.reshape(base.shape))

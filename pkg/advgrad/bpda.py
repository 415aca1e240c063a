"""
The :mod:`bpda` module wraps a preprocessing defense ``d`` so that its
forward pass is kept while its backward pass is replaced, either by the
backward pass of a differentiable substitute ``g`` evaluated at the same
input or by a backward function given directly: ::

    defended = bpda.straight_through(defense.BitSqueeze(1))
    logits = model(defended(x))  # gradients pass d unchanged

A wrapped defense is itself a :class:`advgrad.defense.Preprocessor` and
may appear inside pipelines.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import numpy as np
from . import tensor, defense
from .tensor import Tensor, Tape, Op, ContractError


def identity(x):
    return x


def _bpda_forward(a, module):
    with tensor.no_record():
        return module.defense(Tensor._wrap(a)).data

def _substitute_backward(g, a, module):
    with Tape() as tape:
        leaf = tape.watch(a)
        substitute = tensor.as_tensor(module.forwardsub(leaf))
        if substitute.shape != g.shape:
            raise ContractError("substitute returned shape %s, defense returned %s" %
                                (substitute.shape, g.shape))
        total = tensor.sum(substitute * Tensor._wrap(g))
    if total.tape is not tape:
        return np.zeros(a.shape)
    return tensor.backward(tape, total)[leaf].data

def _bpda_backward(g, out, a, module):
    if module.backward_fn is None:
        return (_substitute_backward(g, a, module),)

    with tensor.no_record():
        grad = tensor.as_tensor(module.backward_fn(Tensor._wrap(a), Tensor._wrap(g))).data
    if grad.shape != a.shape:
        raise ContractError("backward function returned shape %s for input of shape %s" %
                            (grad.shape, a.shape))
    return (grad,)

_bpda = Op("bpda", _bpda_forward, _bpda_backward)


class BpdaModule(defense.Preprocessor):
    """
    A defense with a substituted backward pass. Exactly one of
    ``forwardsub`` and ``backward_fn`` is set.

    :ivar defense: (callable) the wrapped forward transformation ``d``
    :ivar forwardsub: (callable or None) differentiable ``g``; the input
        gradient is the backward pass of ``g`` at the input of ``d``
    :ivar backward_fn: (callable or None) ``backward_fn(x, upstream)``
        returning the input gradient
    """

    differentiable = True

    def __init__(self, defense, forwardsub=None, backward_fn=None):
        if (forwardsub is None) == (backward_fn is None):
            raise ContractError("exactly one of forwardsub and backward_fn must be given")
        super().__init__()
        self.defense, self.forwardsub, self.backward_fn = defense, forwardsub, backward_fn

    @property
    def name(self):
        return getattr(self.defense, "name", "bpda")

    def describe(self):
        if hasattr(self.defense, "describe"):
            return self.defense.describe()
        return self.name

    def __repr__(self):
        return "BpdaModule(%r)" % (self.defense,)

    def forward(self, x):
        return _bpda(x, module=self)


def wrap_with_forward_substitute(d, g):
    """
    Returns ``d`` with the backward pass of ``g``, evaluated at the
    input of ``d``. ``g`` must map tensors of the input shape to tensors
    of the output shape of ``d``.
    """
    return BpdaModule(d, forwardsub=g)

def wrap_with_backward_fn(d, backward_fn):
    """
    Returns ``d`` with the backward pass ``backward_fn(x, upstream)``.

    :raise: :class:`advgrad.tensor.ContractError` during backward if
        ``backward_fn`` changes the shape
    """
    return BpdaModule(d, backward_fn=backward_fn)

def straight_through(d):
    """Returns ``d`` with the backward pass of the identity."""
    return wrap_with_forward_substitute(d, identity)

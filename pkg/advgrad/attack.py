"""
The :mod:`attack` module defines the contract every gradient attack is
built on: a ``predict`` callable, a :class:`LossFn` taking ``predict(x)``
and ``y``, and :func:`perturb_iterative`, which needs nothing else from
either of them.

Swapping the pair changes the attack without touching the perturbation
engine: classifier logits with :data:`CROSS_ENTROPY` give PGD, hidden
features with :data:`MSE` towards a guide representation give the
feature-matching attack, and :func:`combined_loss` attacks several
objectives at once through tuple outputs.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import numpy as np
from . import tensor
from .tensor import Tensor, Tape, ContractError, DimensionError

NORMS = ("linf", "l2")


class LossFn:
    """
    A loss taking ``predict(x)`` and ``y`` to a scalar :class:`Tensor`.

    :ivar fn: (callable) ``fn(output, y)``
    :ivar targeted: (bool) if true, perturbations minimize the loss
        towards ``y``; otherwise they maximize it at ``y``
    :ivar name: (string) name used in reports
    """

    def __init__(self, fn, targeted=False, name=None):
        self.fn, self.targeted = fn, targeted
        self.name = name if name is not None else getattr(fn, "__name__", "loss")

    def __repr__(self):
        return "LossFn(%s, targeted=%s)" % (self.name, self.targeted)

    def __call__(self, output, y):
        return self.fn(output, y)

    def as_targeted(self, targeted=True):
        """Returns the same loss with the ``targeted`` flag set to ``targeted``."""
        return LossFn(self.fn, targeted, self.name)


def _negative_margin(logits, labels):
    return tensor.neg(tensor.mean(tensor.margin(logits, labels)))

CROSS_ENTROPY = LossFn(tensor.softmax_cross_entropy, name="ce")
MARGIN = LossFn(_negative_margin, name="margin")
MSE = LossFn(tensor.mse, targeted=True, name="mse")

LOSSES = {"ce": CROSS_ENTROPY, "margin": MARGIN}
"""Classification losses selectable by name in attack configurations."""


def combined_loss(*losses, **kwargs):
    """
    Returns an untargeted :class:`LossFn` over tuple outputs and tuple
    targets: member ``i`` scores ``output[i]`` against ``y[i]``. Targeted
    members enter with a negative sign, so maximizing the sum moves
    every member in its own direction.

    :param losses: (:class:`LossFn`) one loss per tuple position
    :param weights: (list of float) optional weights, all ones by default
    """
    weights = kwargs.pop("weights", None) or [1.0] * len(losses)
    if kwargs:
        raise TypeError("unexpected arguments %s" % ", ".join(kwargs))
    if len(weights) != len(losses):
        raise ContractError("%d weights given for %d losses" % (len(weights), len(losses)))

    def fn(outputs, targets):
        if len(outputs) != len(losses) or len(targets) != len(losses):
            raise ContractError("combined loss expects %d outputs and targets" % len(losses))
        total = None
        for loss, weight, output, target in zip(losses, weights, outputs, targets):
            term = loss(output, target) * (-weight if loss.targeted else weight)
            total = term if total is None else total + term
        return total

    return LossFn(fn, name="+".join(loss.name for loss in losses))


class PerturbBudget:
    """
    The set of allowed adversarial inputs: within ``eps`` of the clean
    input in ``norm``, and within [``clip_min``, ``clip_max``].

    :ivar norm: (string) ``"linf"`` or ``"l2"``
    :ivar eps: (float) maximum perturbation magnitude
    :ivar clip_min: (float) smallest valid input value
    :ivar clip_max: (float) largest valid input value
    """

    def __init__(self, norm, eps, clip_min=0.0, clip_max=1.0):
        if norm not in NORMS:
            raise ContractError("norm must be one of %s, got %r" % (", ".join(NORMS), norm))
        eps, clip_min, clip_max = float(eps), float(clip_min), float(clip_max)
        if not np.isfinite(eps) or eps < 0:
            raise ContractError("eps must be finite and non-negative, got %r" % eps)
        if not clip_min < clip_max:
            raise ContractError("clip_min %r must be below clip_max %r" % (clip_min, clip_max))
        self.norm, self.eps, self.clip_min, self.clip_max = norm, eps, clip_min, clip_max

    def __repr__(self):
        return "PerturbBudget(%s, eps=%r, clip=[%r, %r])" % \
            (self.norm, self.eps, self.clip_min, self.clip_max)

    def clip(self, values):
        return np.clip(values, self.clip_min, self.clip_max)

    def distance(self, x_adv, x):
        """Returns the per-example distance in this budget's norm."""
        delta = (tensor.as_tensor(x_adv).data - tensor.as_tensor(x).data)
        delta = delta.reshape(delta.shape[0], -1)
        if self.norm == "linf":
            return np.abs(delta).max(axis=1) if delta.shape[1] else np.zeros(len(delta))
        return np.sqrt((delta * delta).sum(axis=1))

    def contains(self, x_adv, x, tolerance=1e-9):
        """Returns whether every example of ``x_adv`` is admissible for ``x``."""
        values = tensor.as_tensor(x_adv).data
        return bool(np.all(self.distance(x_adv, x) <= self.eps + tolerance) and
                    np.all(values >= self.clip_min) and np.all(values <= self.clip_max))


def _per_example_norm(values, order):
    flat = values.reshape(values.shape[0], -1)
    if order == 1:
        norms = np.abs(flat).sum(axis=1)
    else:
        norms = np.sqrt((flat * flat).sum(axis=1))
    return norms.reshape((-1,) + (1,) * (values.ndim - 1))

def _check_shapes(v, center):
    if v.shape != center.shape:
        raise DimensionError("cannot project shape %s around center of shape %s" %
                             (v.shape, center.shape))

def project_linf(v, center, eps):
    """
    Clamps ``v`` elementwise into [``center - eps``, ``center + eps``].
    """
    v, center = tensor.as_tensor(v).data, tensor.as_tensor(center).data
    _check_shapes(v, center)
    return Tensor._wrap(np.clip(v, center - eps, center + eps))

def _project_l2(v, center, eps):
    delta = v - center
    norms = _per_example_norm(delta, 2)
    factor = np.where(norms > eps, eps / np.where(norms > 0, norms, 1.0), 1.0)
    return np.where(norms > eps, center + delta * factor, v)

def project_l2(v, center, eps):
    """
    Returns ``v`` if ``||v - center||_2 <= eps`` and otherwise
    ``center + eps * (v - center) / ||v - center||_2``. For batched
    tensors, the norm is taken per example (over all axes but the first).
    """
    v, center = tensor.as_tensor(v).data, tensor.as_tensor(center).data
    _check_shapes(v, center)
    if v.ndim < 2:
        return Tensor._wrap(_project_l2(v[None], center[None], eps)[0])
    return Tensor._wrap(_project_l2(v, center, eps))


def accumulate_momentum(momentum, grad, decay):
    """
    One momentum step: ``decay * momentum + grad / ||grad||_1``, with the
    L1 norm taken per example. Examples with zero gradient add nothing.
    """
    norms = _per_example_norm(grad, 1)
    normalized = np.where(norms > 0, grad / np.where(norms > 0, norms, 1.0), 0.0)
    return decay * momentum + normalized


def _random_start(rng, x, budget):
    if budget.norm == "linf":
        delta = rng.uniform(-budget.eps, budget.eps, size=x.shape)
    else:
        direction = rng.standard_normal(size=x.shape)
        norms = _per_example_norm(direction, 2)
        direction = direction / np.where(norms > 0, norms, 1.0)
        dims = int(np.prod(x.shape[1:]))
        radius = budget.eps * rng.uniform(0.0, 1.0, size=norms.shape) ** (1.0 / dims)
        delta = direction * radius
    return budget.clip(x + delta)

def _step_direction(grad, norm):
    if norm == "linf":
        return np.sign(grad)
    norms = _per_example_norm(grad, 2)
    # Zero-gradient examples do not move.
    return np.where(norms > 0, grad / np.where(norms > 0, norms, 1.0), 0.0)

def _project(values, x, budget):
    if budget.norm == "linf":
        values = np.clip(values, x - budget.eps, x + budget.eps)
    else:
        values = _project_l2(values, x, budget.eps)
    return budget.clip(values)


def loss_gradient(x, y, predict, loss_fn):
    """
    Returns ``(loss, gradient)`` of ``loss_fn(predict(x), y)`` with respect
    to the input ``x``, evaluated on a private tape.
    """
    with Tape() as tape:
        leaf = tape.watch(x)
        loss = loss_fn(predict(leaf), y)
    if not isinstance(loss, Tensor) or loss.tape is not tape:
        return float(tensor.as_tensor(loss).data), np.zeros(tensor.as_tensor(x).shape)
    return loss.item(), tensor.backward(tape, loss)[leaf].data


def perturb_iterative(x, y, predict, loss_fn, budget, nb_iter, eps_iter,
                      rand_init=False, momentum_decay=0.0, seed=None):
    """
    Iterative projected perturbation, the engine shared by every
    gradient attack.

    Each of ``nb_iter`` iterations computes ``g``, the gradient of
    ``loss_fn(predict(x_adv), y)`` with respect to ``x_adv``; with momentum,
    ``g`` is replaced by the accumulator of :func:`accumulate_momentum`.
    The iterate then moves by ``eps_iter`` along ``sign(g)`` (Linf) or
    ``g / ||g||_2`` (L2), up the loss unless ``loss_fn.targeted``, and is
    projected back into the budget. Only ``predict`` and ``loss_fn`` calls
    are made; nothing about their internals is assumed.

    :param x: (:class:`Tensor`) clean inputs, batch first, inside the clip range
    :param y: whatever ``loss_fn`` takes as its second argument
    :param predict: (callable) maps a :class:`Tensor` to anything ``loss_fn`` takes
    :param loss_fn: (:class:`LossFn`)
    :param budget: (:class:`PerturbBudget`)
    :param nb_iter: (int) number of iterations, zero or more
    :param eps_iter: (float) positive step size
    :param rand_init: (bool) start from a uniform draw in the budget ball
    :param momentum_decay: (float) decay of the momentum accumulator;
        0 disables momentum
    :param seed: seed of the random start
    :return: (:class:`Tensor`) adversarial inputs; ``x`` is not modified
    """
    if not isinstance(budget, PerturbBudget):
        raise ContractError("budget must be a PerturbBudget")
    if nb_iter < 0 or int(nb_iter) != nb_iter:
        raise ContractError("nb_iter must be a non-negative integer, got %r" % (nb_iter,))
    if not eps_iter > 0:
        raise ContractError("eps_iter must be positive, got %r" % (eps_iter,))
    if momentum_decay < 0:
        raise ContractError("momentum_decay must be non-negative, got %r" % (momentum_decay,))

    clean = tensor.as_tensor(x).data
    if np.any(clean < budget.clip_min) or np.any(clean > budget.clip_max):
        raise ContractError("inputs lie outside [%r, %r]" % (budget.clip_min, budget.clip_max))

    if rand_init:
        current = _random_start(np.random.default_rng(seed), clean, budget)
    else:
        current = clean.copy()

    direction_sign = -1.0 if loss_fn.targeted else 1.0
    momentum = np.zeros(clean.shape)
    for _ in range(int(nb_iter)):
        _, grad = loss_gradient(Tensor._wrap(current.copy()), y, predict, loss_fn)
        if momentum_decay > 0:
            momentum = accumulate_momentum(momentum, grad, momentum_decay)
            grad = momentum
        step = _step_direction(grad, budget.norm)
        current = _project(current + direction_sign * eps_iter * step, clean, budget)

    return Tensor._wrap(current)

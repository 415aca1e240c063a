"""
The :mod:`gradient` module contains the named gradient attacks. All of
them except :func:`carlini_wagner_l2` are configurations of
:func:`advgrad.attack.perturb_iterative`; they differ only in the
budget norm, the number of steps, the random start, momentum and the
``(predict, loss_fn)`` pair.

Attacks take a batch ``x`` whose first axis indexes examples and return
a new :class:`advgrad.tensor.Tensor`; ``x`` is never modified.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import numpy as np
from . import tensor, attack
from .tensor import Tensor, Tape, ContractError, DimensionError
from .attack import CROSS_ENTROPY, MSE


def _require_norm(budget, norm, name):
    if budget.norm != norm:
        raise ContractError("%s needs a %s budget, got %s" % (name, norm, budget.norm))


def gradient_sign_attack(x, y, predict, budget, loss_fn=CROSS_ENTROPY, seed=None):
    """
    One step of length ``eps`` along the sign of the loss gradient (FGSM).
    """
    _require_norm(budget, "linf", "gradient_sign_attack")
    if budget.eps == 0:
        return Tensor(tensor.as_tensor(x).data)
    return attack.perturb_iterative(x, y, predict, loss_fn, budget,
                                    nb_iter=1, eps_iter=budget.eps, seed=seed)

def gradient_attack(x, y, predict, budget, loss_fn=CROSS_ENTROPY, seed=None):
    """
    One step of L2 length ``eps`` along the normalized loss gradient.
    Examples with zero gradient are returned unchanged.
    """
    _require_norm(budget, "l2", "gradient_attack")
    if budget.eps == 0:
        return Tensor(tensor.as_tensor(x).data)
    return attack.perturb_iterative(x, y, predict, loss_fn, budget,
                                    nb_iter=1, eps_iter=budget.eps, seed=seed)

def basic_iterative(x, y, predict, budget, nb_iter, eps_iter,
                    loss_fn=CROSS_ENTROPY, seed=None):
    """Iterative attack starting at ``x``, in either norm."""
    return attack.perturb_iterative(x, y, predict, loss_fn, budget, nb_iter, eps_iter,
                                    rand_init=False, seed=seed)

def pgd(x, y, predict, budget, nb_iter, eps_iter, loss_fn=CROSS_ENTROPY,
        rand_init=True, seed=None):
    """
    Projected gradient descent from a random start in the budget ball.
    With ``rand_init=False`` this is :func:`basic_iterative`.
    """
    return attack.perturb_iterative(x, y, predict, loss_fn, budget, nb_iter, eps_iter,
                                    rand_init=rand_init, seed=seed)

def momentum_iterative(x, y, predict, budget, nb_iter, eps_iter, decay,
                       loss_fn=CROSS_ENTROPY, seed=None):
    """
    Iterative attack stepping along an accumulator of L1-normalized
    gradients decayed by ``decay``. ``eps_iter`` is not rescaled.
    """
    if decay < 0:
        raise ContractError("momentum decay must be non-negative, got %r" % (decay,))
    return attack.perturb_iterative(x, y, predict, loss_fn, budget, nb_iter, eps_iter,
                                    rand_init=False, momentum_decay=decay, seed=seed)

def fast_feature_attack(x, guide, predict_features, budget, nb_iter, eps_iter,
                        rand_init=False, seed=None):
    """
    Moves ``x`` so that ``predict_features(x)`` approaches the ``guide``
    representation, by minimizing their mean squared error.

    :raise: :class:`advgrad.tensor.DimensionError` if ``guide`` does not
        have the shape of the features of ``x``
    """
    _require_norm(budget, "linf", "fast_feature_attack")
    guide = tensor.as_tensor(guide).detach()
    with tensor.no_record():
        features = tensor.as_tensor(predict_features(tensor.as_tensor(x)))
    if features.shape != guide.shape:
        raise DimensionError("guide of shape %s does not match features of shape %s" %
                             (guide.shape, features.shape))
    return attack.perturb_iterative(x, guide, predict_features, MSE, budget, nb_iter, eps_iter,
                                    rand_init=rand_init, seed=seed)


def cw_objective(logits, labels, confidence, targeted):
    """
    Returns the per-example hinge ``max(f + confidence, 0)``, where ``f`` is
    ``Z[label] - max over k != label of Z[k]`` for untargeted attacks and
    its negation for targeted ones. It is zero exactly when the attack
    has succeeded by at least ``confidence``.
    """
    margins = tensor.margin(logits, labels)
    if targeted:
        margins = tensor.neg(margins)
    return tensor.relu(margins + confidence)

def _cw_success(logits, labels, confidence, targeted):
    rows = np.arange(len(labels))
    masked = logits.copy()
    masked[rows, labels] = -np.inf
    margins = logits[rows, labels] - masked.max(axis=1)
    if targeted:
        return (margins >= confidence) & (margins > 0)
    return (-margins >= confidence) & (margins < 0)


def carlini_wagner_l2(x, y, predict, confidence=0.0, binary_search_steps=9, max_iter=200,
                      initial_c=1.0, lr=0.05, clip_min=0.0, clip_max=1.0, targeted=False,
                      seed=None):
    """
    Carlini-Wagner L2 attack. Optimizes ``w`` with
    ``x' = clip_min + (tanh(w) + 1) / 2 * (clip_max - clip_min)`` to minimize
    ``||x' - x||_2^2 + c * cw_objective(predict(x'))`` by plain gradient
    descent for ``max_iter`` steps, then adjusts ``c`` per example: it
    doubles after a failure until the first success or ``2**30 * initial_c``,
    and is bisected afterwards. The successful iterate of smallest L2
    distance over all rounds is kept.

    The attack is deterministic; ``seed`` is accepted for a uniform
    attack interface.

    :param y: (sequence of int) true labels, or target labels if ``targeted``
    :return: (``x_adv``, ``success``, ``l2``): adversarial inputs (clean
        inputs where the attack failed), a boolean array, and per-example
        L2 distances (``inf`` where the attack failed)
    """
    if binary_search_steps < 1 or max_iter < 0:
        raise ContractError("binary_search_steps must be positive and max_iter non-negative")
    if not initial_c > 0 or not lr > 0 or confidence < 0:
        raise ContractError("initial_c and lr must be positive, confidence non-negative")
    if not clip_min < clip_max:
        raise ContractError("clip_min %r must be below clip_max %r" % (clip_min, clip_max))

    clean = tensor.as_tensor(x).data
    labels = np.asarray(y, dtype=np.int64)
    if np.any(clean < clip_min) or np.any(clean > clip_max):
        raise ContractError("inputs lie outside [%r, %r]" % (clip_min, clip_max))

    with tensor.no_record():
        logits = tensor.as_tensor(predict(Tensor._wrap(clean))).data
    success = _cw_success(logits, labels, confidence, targeted)
    best_adv = clean.copy()
    best_l2 = np.where(success, 0.0, np.inf)

    active = np.flatnonzero(~success)
    if len(active) == 0:
        return Tensor._wrap(best_adv), success, best_l2

    span = clip_max - clip_min
    origin, target = clean[active], labels[active]
    axes = tuple(range(1, origin.ndim))
    w0 = np.arctanh(np.clip((origin - clip_min) / span * 2.0 - 1.0, -1 + 1e-6, 1 - 1e-6))
    lower = np.zeros(len(active))
    upper = np.full(len(active), np.inf)
    c = np.full(len(active), float(initial_c))
    c_limit = 2.0 ** 30 * initial_c
    found_l2 = np.full(len(active), np.inf)
    found_adv = origin.copy()

    for _ in range(binary_search_steps):
        w = w0.copy()
        round_success = np.zeros(len(active), dtype=bool)
        for step in range(max_iter + 1):
            with Tape() as tape:
                leaf = tape.watch(w)
                candidate = clip_min + (tensor.tanh(leaf) + 1.0) * (0.5 * span)
                distance = tensor.sum(tensor.square(candidate - origin), axis=axes)
                scores = tensor.as_tensor(predict(candidate))
                total = tensor.sum(distance + cw_objective(scores, target, confidence, targeted)
                                   * Tensor._wrap(c))

            hit = _cw_success(scores.data, target, confidence, targeted)
            better = hit & (distance.data < found_l2)
            found_l2 = np.where(better, distance.data, found_l2)
            found_adv[better] = candidate.data[better]
            round_success |= hit

            if step == max_iter:
                break
            w = w - lr * tensor.backward(tape, total)[leaf].data

        upper = np.where(round_success, np.minimum(upper, c), upper)
        lower = np.where(round_success, lower, np.maximum(lower, c))
        c = np.where(np.isfinite(upper), (lower + upper) / 2.0, np.minimum(c * 2.0, c_limit))

    done = np.isfinite(found_l2)
    best_adv[active[done]] = found_adv[done]
    best_l2[active[done]] = np.sqrt(found_l2[done])
    success[active[done]] = True
    return Tensor._wrap(best_adv), success, best_l2

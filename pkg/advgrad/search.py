"""
The :mod:`search` module contains attacks that modify few pixels:
two query-only searches and the Jacobian saliency map attack.

Each attack takes a single example ``x`` (without a batch axis) and
calls ``predict`` on batches of variants of it. Query-only attacks never
record a tape; :func:`jsma` differentiates the logits and nothing else.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import math
import numpy as np
from . import tensor
from .tensor import Tensor, Tape, ContractError


class SearchBudget:
    """
    Limits of a query-only search.

    :ivar max_queries: (int) maximum number of examples passed to ``predict``
    :ivar clip_min: (float) smallest valid pixel value
    :ivar clip_max: (float) largest valid pixel value
    :ivar p: (float) per-pixel perturbation magnitude; half the clip
        range by default
    """

    def __init__(self, max_queries, clip_min=0.0, clip_max=1.0, p=None):
        if int(max_queries) != max_queries or max_queries < 1:
            raise ContractError("max_queries must be a positive integer, got %r" % (max_queries,))
        if not clip_min < clip_max:
            raise ContractError("clip_min %r must be below clip_max %r" % (clip_min, clip_max))
        if p is None:
            p = (clip_max - clip_min) / 2.0
        if not p > 0:
            raise ContractError("p must be positive, got %r" % (p,))
        self.max_queries, self.clip_min, self.clip_max, self.p = \
            int(max_queries), float(clip_min), float(clip_max), float(p)

    def __repr__(self):
        return "SearchBudget(max_queries=%d, clip=[%r, %r], p=%r)" % \
            (self.max_queries, self.clip_min, self.clip_max, self.p)


class SearchResult:
    """
    :ivar x_adv: (:class:`advgrad.tensor.Tensor`) the adversarial example,
        or the clean example if the search failed
    :ivar success: (bool) whether ``x_adv`` is classified as intended
    :ivar queries: (int) number of examples passed to ``predict``
    """
    def __init__(self, x_adv, success, queries):
        self.x_adv, self.success, self.queries = x_adv, success, queries

    def __repr__(self):
        return "SearchResult(success=%s, queries=%d)" % (self.success, self.queries)


class _Oracle:
    """Counts every example passed to ``predict``."""

    def __init__(self, predict, shape):
        self.predict, self.shape, self.queries = predict, shape, 0

    def logits(self, variants):
        variants = np.asarray(variants).reshape((-1,) + self.shape)
        self.queries += len(variants)
        with tensor.no_record():
            return tensor.as_tensor(self.predict(Tensor._wrap(variants))).data

    def classes(self, variants):
        return self.logits(variants).argmax(axis=1)


def _check_example(x, clip_min, clip_max):
    values = tensor.as_tensor(x).data
    if np.any(values < clip_min) or np.any(values > clip_max):
        raise ContractError("input lies outside [%r, %r]" % (clip_min, clip_max))
    return values

def single_pixel_attack(x, y, predict, budget, seed=None, chunk_size=64):
    """
    Tries, pixel by pixel in a seeded random order, setting one pixel to
    ``clip_min`` and then to ``clip_max``, and returns the first variant
    not classified as ``y``. Variants equal to ``x`` are skipped.

    :return: (:class:`SearchResult`) ``x_adv`` differs from ``x`` in at
        most one pixel
    """
    clean = _check_example(x, budget.clip_min, budget.clip_max)
    oracle = _Oracle(predict, clean.shape)
    if oracle.classes(clean[None])[0] != y:
        return SearchResult(Tensor._wrap(clean.copy()), True, oracle.queries)

    flat = clean.reshape(-1)
    order = np.random.default_rng(seed).permutation(flat.size)
    candidates = [(pixel, value) for pixel in order
                  for value in (budget.clip_min, budget.clip_max) if flat[pixel] != value]

    begin = 0
    while begin < len(candidates) and oracle.queries < budget.max_queries:
        chunk = candidates[begin:begin + min(chunk_size, budget.max_queries - oracle.queries)]
        variants = np.repeat(flat[None], len(chunk), axis=0)
        for row, (pixel, value) in enumerate(chunk):
            variants[row, pixel] = value
        hits = np.flatnonzero(oracle.classes(variants) != y)
        if len(hits):
            return SearchResult(Tensor._wrap(variants[hits[0]].reshape(clean.shape)),
                                True, oracle.queries)
        begin += len(chunk)
    return SearchResult(Tensor._wrap(clean.copy()), False, oracle.queries)


def _score(oracle, current, pixels, y, budget):
    """
    Queries ``current`` and its variants with each of ``pixels`` moved by
    ``+p`` and by ``-p``. Returns the drop in the probability of class ``y``
    of the better direction per pixel, that direction, the variants
    (``+p`` rows at even indices) and their classes.
    """
    base = tensor.softmax(oracle.logits(current[None]))[0, y]
    variants = np.repeat(current[None], 2 * len(pixels), axis=0)
    rows = np.arange(len(pixels))
    variants[2 * rows, pixels] = np.minimum(current[pixels] + budget.p, budget.clip_max)
    variants[2 * rows + 1, pixels] = np.maximum(current[pixels] - budget.p, budget.clip_min)
    logits = oracle.logits(variants)
    probabilities = tensor.softmax(logits)[:, y].reshape(len(pixels), 2)
    signs = np.where(probabilities[:, 0] <= probabilities[:, 1], 1.0, -1.0)
    return base - probabilities.min(axis=1), signs, variants, logits.argmax(axis=1)

def pixel_scores(x, y, predict, budget):
    """
    Returns the drop in the softmax probability of class ``y`` when
    each pixel of ``x`` is moved by ``p`` in its better direction.
    Uses ``2 * x.size + 1`` queries, which ``budget`` does not limit.
    """
    clean = _check_example(x, budget.clip_min, budget.clip_max)
    oracle = _Oracle(predict, clean.shape)
    scores, _, _, _ = _score(oracle, clean.reshape(-1), np.arange(clean.size), y, budget)
    return scores.reshape(clean.shape)

def local_search_attack(x, y, predict, budget, neighborhood_size=5, rounds=10, seed=None):
    """
    Greedy local search. Every round scores pixels, taken in a seeded
    random order, by the drop in the softmax probability of class ``y``
    when moved by ``+p`` or ``-p``; as many pixels are scored as the
    remaining queries allow. The ``neighborhood_size`` best pixels are then
    moved in their better direction. The search stops as soon as a queried
    variant is not classified as ``y``, or when rounds or queries run out.
    """
    if neighborhood_size < 1 or rounds < 1:
        raise ContractError("neighborhood_size and rounds must be positive")
    clean = _check_example(x, budget.clip_min, budget.clip_max)
    oracle = _Oracle(predict, clean.shape)
    if oracle.classes(clean[None])[0] != y:
        return SearchResult(Tensor._wrap(clean.copy()), True, oracle.queries)

    rng = np.random.default_rng(seed)
    current = clean.reshape(-1).copy()
    for _ in range(rounds):
        # One query for the base probability, two per pixel, one for the check.
        affordable = (budget.max_queries - oracle.queries - 2) // 2
        if affordable < 1:
            break
        pixels = rng.permutation(current.size)[:affordable]
        scores, signs, variants, classes = _score(oracle, current, pixels, y, budget)

        hits = np.flatnonzero(classes != y)
        if len(hits):
            return SearchResult(Tensor._wrap(variants[hits[0]].reshape(clean.shape)),
                                True, oracle.queries)

        ranking = np.argsort(-scores, kind="stable")[:neighborhood_size]
        best = pixels[ranking]
        current[best] = np.clip(current[best] + signs[ranking] * budget.p,
                                budget.clip_min, budget.clip_max)
        if oracle.classes(current[None])[0] != y:
            return SearchResult(Tensor._wrap(current.reshape(clean.shape)), True, oracle.queries)
    return SearchResult(Tensor._wrap(clean.copy()), False, oracle.queries)


def logit_jacobian(x, predict):
    """
    Returns the logits of the single example ``x`` and their Jacobian,
    a K x ``x.size`` array computed with one backward pass per class.
    """
    values = tensor.as_tensor(x).data
    with Tape() as tape:
        leaf = tape.watch(values[None])
        logits = tensor.as_tensor(predict(leaf))
        selectors = [tensor.sum(logits * np.eye(logits.shape[1])[k][None])
                     for k in range(logits.shape[1])]
    if logits.tape is not tape:
        return logits.data[0], np.zeros((logits.shape[1], values.size))
    rows = [tensor.backward(tape, selector)[leaf].data.reshape(-1) for selector in selectors]
    return logits.data[0], np.stack(rows)

def select_pair(grad_target, grad_other, domain, increasing=True):
    """
    Returns the pixel pair ``(p, q)``, ``p < q``, of ``domain`` with the
    largest saliency, or None if no pair is admissible. With
    ``a = grad_target[p] + grad_target[q]`` and ``b = grad_other[p] + grad_other[q]``,
    a pair is admissible when ``a > 0`` and ``b < 0`` (both signs flipped when
    not ``increasing``), and its saliency is ``|a| * |b|``. Ties go to the
    lexicographically lowest pair.

    :param grad_target: (array) gradient of the target logit per pixel
    :param grad_other: (array) summed gradient of the other logits per pixel
    :param domain: (iterable of int) pixels that may still change
    """
    domain = np.array(sorted(domain), dtype=np.int64)
    if len(domain) < 2:
        return None
    a, b = np.asarray(grad_target)[domain], np.asarray(grad_other)[domain]
    alpha, beta = a[:, None] + a[None, :], b[:, None] + b[None, :]
    direction = 1.0 if increasing else -1.0
    admissible = (direction * alpha > 0) & (direction * beta < 0) & \
        np.triu(np.ones(alpha.shape, dtype=bool), k=1)
    if not admissible.any():
        return None
    saliency = np.where(admissible, np.abs(alpha) * np.abs(beta), -np.inf)
    first, second = divmod(int(np.argmax(saliency)), len(domain))
    return int(domain[first]), int(domain[second])

def jsma(x, target, predict, theta=1.0, gamma=0.1, clip_min=0.0, clip_max=1.0):
    """
    Jacobian saliency map attack towards class ``target``. Each step
    moves the pair chosen by :func:`select_pair` by ``theta`` (clipped);
    pixels reaching ``clip_max`` (``clip_min`` when ``theta < 0``) leave the
    candidate set. The attack stops when ``target`` wins, when no pair is
    admissible, or when a step would change more than
    ``ceil(gamma * x.size)`` pixels in total.

    :return: (:class:`SearchResult`) with ``queries`` counting forward passes
    """
    if theta == 0:
        raise ContractError("theta must be non-zero")
    if not 0 < gamma <= 1:
        raise ContractError("gamma must be in (0, 1], got %r" % (gamma,))
    clean = _check_example(x, clip_min, clip_max)
    current = clean.reshape(-1).copy()
    limit = int(math.ceil(gamma * current.size))
    increasing = theta > 0
    bound = clip_max if increasing else clip_min

    domain = set(int(pixel) for pixel in np.flatnonzero(current != bound))
    changed, queries = set(), 0
    while True:
        logits, jacobian = logit_jacobian(current.reshape(clean.shape), predict)
        queries += 1
        if not 0 <= target < len(logits):
            raise IndexError("target %d out of range for %d classes" % (target, len(logits)))
        if logits.argmax() == target:
            return SearchResult(Tensor._wrap(current.reshape(clean.shape)), True, queries)

        pair = select_pair(jacobian[target], jacobian.sum(axis=0) - jacobian[target],
                           domain, increasing)
        if pair is None or len(changed.union(pair)) > limit:
            return SearchResult(Tensor._wrap(clean.copy()), False, queries)
        for pixel in pair:
            current[pixel] = min(max(current[pixel] + theta, clip_min), clip_max)
            changed.add(pixel)
            if current[pixel] == bound:
                domain.discard(pixel)

"""
The :mod:`registry` module runs a configured attack on a batch, against
a model optionally defended by a preprocessing pipeline, and checks
that the result respects the attack's constraints.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import math
import numpy as np
from . import tensor, attack, gradient, search
from .tensor import Tensor, ContractError


class InvariantError(RuntimeError):
    """Raised when an attack produces an input outside its budget."""


def derive_seed(seed, *path):
    """
    Returns a seed for the random stream at ``path`` below ``seed``, so
    that e.g. every example of every chunk has its own stream.
    """
    if seed is None:
        return None
    return tuple(int(part) for part in np.atleast_1d(seed)) + tuple(int(part) for part in path)


def _budget(config):
    return attack.PerturbBudget(config.norm, config["eps"],
                                config["clip_min"], config["clip_max"])

def _classifier(model, defense):
    if defense is None:
        return model.predict_logits
    return lambda x: model.predict_logits(defense(x))

def _run_fgsm(config, model, x, y, seed, defense):
    return gradient.gradient_sign_attack(x, y, _classifier(model, defense), _budget(config),
                                         attack.LOSSES[config["loss"]], seed)

def _run_fgm(config, model, x, y, seed, defense):
    return gradient.gradient_attack(x, y, _classifier(model, defense), _budget(config),
                                    attack.LOSSES[config["loss"]], seed)

def _run_bim(config, model, x, y, seed, defense):
    return gradient.basic_iterative(x, y, _classifier(model, defense), _budget(config),
                                    config["nb_iter"], config["eps_iter"],
                                    attack.LOSSES[config["loss"]], seed)

def _run_pgd(config, model, x, y, seed, defense):
    return gradient.pgd(x, y, _classifier(model, defense), _budget(config),
                        config["nb_iter"], config["eps_iter"], attack.LOSSES[config["loss"]],
                        config["rand_init"], seed)

def _run_mi(config, model, x, y, seed, defense):
    return gradient.momentum_iterative(x, y, _classifier(model, defense), _budget(config),
                                       config["nb_iter"], config["eps_iter"], config["decay"],
                                       attack.LOSSES[config["loss"]], seed)

def _run_cw(config, model, x, y, seed, defense):
    x_adv, _, _ = gradient.carlini_wagner_l2(
        x, y, _classifier(model, defense), config["confidence"],
        config["binary_search_steps"], config["max_iter"], config["initial_c"], config["lr"],
        config["clip_min"], config["clip_max"], seed=seed)
    return x_adv

def _run_fast_feature(config, model, x, y, seed, defense):
    layer = config["layer_index"]
    if defense is None:
        features = lambda inputs: model.predict_features(inputs, layer)
    else:
        features = lambda inputs: model.predict_features(defense(inputs), layer)
    # Each example is guided towards the representation of the next one.
    with tensor.no_record():
        guide = features(Tensor._wrap(np.roll(tensor.as_tensor(x).data, -1, axis=0)))
    return gradient.fast_feature_attack(x, guide, features, _budget(config),
                                        config["nb_iter"], config["eps_iter"],
                                        config["rand_init"], seed)

def _per_example(run):
    def runner(config, model, x, y, seed, defense):
        values = tensor.as_tensor(x).data
        predict = _classifier(model, defense)
        results = [run(config, predict, values[index], int(label), derive_seed(seed, index))
                   for index, label in enumerate(y)]
        return Tensor._wrap(np.stack([result.x_adv.data for result in results])
                            if results else values.copy())
    return runner

def _search_budget(config, **kwargs):
    return search.SearchBudget(config["max_queries"], config["clip_min"], config["clip_max"],
                               **kwargs)

@_per_example
def _run_single_pixel(config, predict, x, y, seed):
    return search.single_pixel_attack(x, y, predict, _search_budget(config), seed)

@_per_example
def _run_local_search(config, predict, x, y, seed):
    return search.local_search_attack(x, y, predict, _search_budget(config, p=config["p"]),
                                      config["neighborhood_size"], config["rounds"], seed)

def _run_jsma(config, model, x, y, seed, defense):
    predict = _classifier(model, defense)
    values = tensor.as_tensor(x).data
    if len(values) == 0:
        return Tensor._wrap(values.copy())
    with tensor.no_record():
        classes = tensor.as_tensor(predict(Tensor._wrap(values[:1]))).shape[1]
    if config["target_shift"] % classes == 0:
        raise ContractError("target_shift %d selects the true class among %d classes" %
                            (config["target_shift"], classes))

    results = []
    for index, label in enumerate(y):
        target = (int(label) + config["target_shift"]) % classes
        results.append(search.jsma(values[index], target, predict, config["theta"],
                                   config["gamma"], config["clip_min"], config["clip_max"]))
    return Tensor._wrap(np.stack([result.x_adv.data for result in results]))

RUNNERS = {
    "fgsm": _run_fgsm,
    "fgm": _run_fgm,
    "bim-linf": _run_bim,
    "bim-l2": _run_bim,
    "pgd-linf": _run_pgd,
    "pgd-l2": _run_pgd,
    "mi-linf": _run_mi,
    "mi-l2": _run_mi,
    "cw-l2": _run_cw,
    "fast-feature": _run_fast_feature,
    "single-pixel": _run_single_pixel,
    "local-search": _run_local_search,
    "jsma": _run_jsma,
}


def check_output(config, x, x_adv):
    """
    :raise: :class:`InvariantError` if ``x_adv`` leaves the clip range,
        the eps-ball of an eps-bounded attack, or the pixel budget of
        a few-pixel attack
    """
    clean, adversarial = tensor.as_tensor(x).data, tensor.as_tensor(x_adv).data
    if clean.shape != adversarial.shape:
        raise InvariantError("attack %s changed the input shape from %s to %s" %
                             (config.name, clean.shape, adversarial.shape))
    if np.any(adversarial < config["clip_min"]) or np.any(adversarial > config["clip_max"]):
        raise InvariantError("attack %s left the clip range" % config.name)
    if len(clean) == 0:
        return

    if "eps" in config.params:
        budget = _budget(config)
        distance = budget.distance(adversarial, clean).max()
        if distance > budget.eps + 1e-9:
            raise InvariantError("attack %s moved %r in %s, beyond eps %r" %
                                 (config.name, distance, budget.norm, budget.eps))

    changed = (adversarial != clean).reshape(len(clean), -1).sum(axis=1).max()
    pixels = clean[0].size
    if config.name == "single-pixel":
        limit = 1
    elif config.name == "jsma":
        limit = int(math.ceil(config["gamma"] * pixels))
    else:
        return
    if changed > limit:
        raise InvariantError("attack %s changed %d pixels, at most %d allowed" %
                             (config.name, changed, limit))


def run_attack(config, model, x, y, seed=0, defense=None):
    """
    Runs the attack configured by ``config`` on the batch ``x`` with true
    labels ``y``, against ``model`` behind the optional ``defense``.

    :return: (:class:`advgrad.tensor.Tensor`) adversarial inputs; clean
        inputs where a search attack failed
    :raise: :class:`InvariantError` if the attack broke its constraints
    """
    x = tensor.as_tensor(x)
    y = np.asarray(y, dtype=np.int64)
    x_adv = RUNNERS[config.name](config, model, x, y, seed, defense)
    check_output(config, x, x_adv)
    return x_adv

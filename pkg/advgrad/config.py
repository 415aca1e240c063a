"""
The :mod:`config` module holds attack and training configurations.

An :class:`AttackConfig` names an attack and carries every hyperparameter
that attack consumes, and nothing else; it is what a report records.
Default values live in :data:`PRESETS` only.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import os
from collections import OrderedDict
from .tensor import ContractError
from .attack import LOSSES


def _positive(value):
    return value > 0

def _non_negative(value):
    return value >= 0

def _non_zero(value):
    return value != 0

def _fraction(value):
    return 0 < value <= 1

def _loss_name(value):
    return value in LOSSES

PARAMETERS = OrderedDict([
    # name:                (type,  check,         description)
    ("loss",               (str,   _loss_name,    "one of " + ", ".join(sorted(LOSSES)))),
    ("eps",                (float, _non_negative, "non-negative")),
    ("nb_iter",            (int,   _non_negative, "a non-negative integer")),
    ("eps_iter",           (float, _positive,     "positive")),
    ("rand_init",          (bool,  None,          "true or false")),
    ("decay",              (float, _non_negative, "non-negative")),
    ("confidence",         (float, _non_negative, "non-negative")),
    ("binary_search_steps", (int,  _positive,     "a positive integer")),
    ("max_iter",           (int,   _non_negative, "a non-negative integer")),
    ("initial_c",          (float, _positive,     "positive")),
    ("lr",                 (float, _positive,     "positive")),
    ("layer_index",        (int,   _non_negative, "a non-negative integer")),
    ("max_queries",        (int,   _positive,     "a positive integer")),
    ("p",                  (float, _positive,     "positive")),
    ("neighborhood_size",  (int,   _positive,     "a positive integer")),
    ("rounds",             (int,   _positive,     "a positive integer")),
    ("theta",              (float, _non_zero,     "non-zero")),
    ("gamma",              (float, _fraction,     "in (0, 1]")),
    ("target_shift",       (int,   _positive,     "a positive integer")),
    ("clip_min",           (float, None,          "a number")),
    ("clip_max",           (float, None,          "a number")),
])
"""Every attack hyperparameter: its type, validity check and a description of valid values."""

_CLIP = ("clip_min", "clip_max")

SCHEMAS = OrderedDict([
    ("fgsm",         ("loss", "eps") + _CLIP),
    ("fgm",          ("loss", "eps") + _CLIP),
    ("bim-linf",     ("loss", "eps", "nb_iter", "eps_iter") + _CLIP),
    ("bim-l2",       ("loss", "eps", "nb_iter", "eps_iter") + _CLIP),
    ("pgd-linf",     ("loss", "eps", "nb_iter", "eps_iter", "rand_init") + _CLIP),
    ("pgd-l2",       ("loss", "eps", "nb_iter", "eps_iter", "rand_init") + _CLIP),
    ("mi-linf",      ("loss", "eps", "nb_iter", "eps_iter", "decay") + _CLIP),
    ("mi-l2",        ("loss", "eps", "nb_iter", "eps_iter", "decay") + _CLIP),
    ("cw-l2",        ("confidence", "binary_search_steps", "max_iter", "initial_c", "lr") + _CLIP),
    ("fast-feature", ("layer_index", "eps", "nb_iter", "eps_iter", "rand_init") + _CLIP),
    ("single-pixel", ("max_queries",) + _CLIP),
    ("local-search", ("max_queries", "p", "neighborhood_size", "rounds") + _CLIP),
    ("jsma",         ("theta", "gamma", "target_shift") + _CLIP),
])
"""Attack name to the ordered names of the hyperparameters it consumes."""

NORMS = {
    "fgsm": "linf", "fgm": "l2", "bim-linf": "linf", "bim-l2": "l2",
    "pgd-linf": "linf", "pgd-l2": "l2", "mi-linf": "linf", "mi-l2": "l2",
    "cw-l2": "l2", "fast-feature": "linf",
}

ITERATIVE = ("fgsm", "fgm", "bim-linf", "bim-l2", "pgd-linf", "pgd-l2", "mi-linf", "mi-l2")
"""Attacks built on the iterative perturbation engine, usable for adversarial training."""

MANDATORY = {
    "pgd-linf": ("loss", "eps", "nb_iter", "eps_iter", "rand_init"),
    "pgd-l2":   ("loss", "eps", "nb_iter", "eps_iter", "rand_init"),
}
"""Hyperparameters that must be given explicitly on the command line."""

_clip = {"clip_min": 0.0, "clip_max": 1.0}
_linf = dict(_clip, loss="ce", eps=0.3)
_l2 = dict(_clip, loss="ce", eps=2.0)

PRESETS = {
    "fgsm":         dict(_linf),
    "fgm":          dict(_l2),
    "bim-linf":     dict(_linf, nb_iter=40, eps_iter=0.01),
    "bim-l2":       dict(_l2, nb_iter=40, eps_iter=0.1),
    "pgd-linf":     dict(_linf, nb_iter=40, eps_iter=0.01, rand_init=True),
    "pgd-l2":       dict(_l2, nb_iter=40, eps_iter=0.1, rand_init=True),
    "mi-linf":      dict(_linf, nb_iter=40, eps_iter=0.01, decay=1.0),
    "mi-l2":        dict(_l2, nb_iter=40, eps_iter=0.1, decay=1.0),
    "cw-l2":        dict(_clip, confidence=0.0, binary_search_steps=9, max_iter=200,
                         initial_c=1.0, lr=0.05),
    "fast-feature": dict(_clip, layer_index=0, eps=0.3, nb_iter=40, eps_iter=0.01,
                         rand_init=False),
    "single-pixel": dict(_clip, max_queries=2000),
    "local-search": dict(_clip, max_queries=10000, p=0.5, neighborhood_size=5, rounds=10),
    "jsma":         dict(_clip, theta=1.0, gamma=0.1, target_shift=1),
}
"""Default hyperparameters of every attack."""


def _coerce(name, value):
    kind, check, description = PARAMETERS[name]
    if kind is bool:
        if isinstance(value, str) and value in ("true", "false"):
            value = value == "true"
        if not isinstance(value, bool):
            raise ContractError("%s must be %s, got %r" % (name, description, value))
        return value
    try:
        if kind is int and (isinstance(value, bool) or int(value) != value):
            raise ValueError
        value = kind(value)
    except (TypeError, ValueError):
        raise ContractError("%s must be %s, got %r" % (name, description, value))
    if check is not None and not check(value):
        raise ContractError("%s must be %s, got %r" % (name, description, value))
    return value


class AttackConfig:
    """
    A named attack with every hyperparameter it consumes.

    :ivar name: (string) attack name, a key of :data:`SCHEMAS`
    :ivar params: (:class:`OrderedDict`) hyperparameters in schema order
    :raise: :class:`advgrad.tensor.ContractError` naming unknown attacks,
        missing, unexpected or invalid parameters
    """

    def __init__(self, name, **params):
        if name not in SCHEMAS:
            raise ContractError("unknown attack %r; available attacks are %s" %
                                (name, ", ".join(SCHEMAS)))
        schema = SCHEMAS[name]
        missing = [key for key in schema if key not in params]
        unexpected = [key for key in params if key not in schema]
        if missing:
            raise ContractError("attack %s is missing %s" % (name, ", ".join(missing)))
        if unexpected:
            raise ContractError("attack %s does not take %s" % (name, ", ".join(unexpected)))

        self.name = name
        self.params = OrderedDict((key, _coerce(key, params[key])) for key in schema)
        if not self.params["clip_min"] < self.params["clip_max"]:
            raise ContractError("clip_min %r must be below clip_max %r" %
                                (self.params["clip_min"], self.params["clip_max"]))

    @classmethod
    def preset(cls, name, **overrides):
        """Returns the :data:`PRESETS` configuration of ``name`` with ``overrides`` applied."""
        if name not in PRESETS:
            raise ContractError("unknown attack %r; available attacks are %s" %
                                (name, ", ".join(SCHEMAS)))
        params = dict(PRESETS[name])
        params.update(overrides)
        return cls(name, **params)

    @classmethod
    def from_dict(cls, name, fields):
        """Inverse of :meth:`to_dict`."""
        fields = dict(fields)
        norm = fields.pop("norm", None)
        config = cls(name, **fields)
        if norm != config.norm:
            raise ContractError("attack %s has norm %s, not %s" % (name, config.norm, norm))
        return config

    def __getitem__(self, key):
        return self.params[key]

    def __eq__(self, other):
        return isinstance(other, AttackConfig) and \
            (self.name, self.params) == (other.name, other.params)

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "AttackConfig(%s, %s)" % (self.name, ", ".join(
            "%s=%r" % item for item in self.params.items()))

    @property
    def norm(self):
        """The perturbation norm, or None for attacks without one."""
        return NORMS.get(self.name)

    @property
    def iterative(self):
        return self.name in ITERATIVE

    def replace(self, **overrides):
        params = dict(self.params)
        params.update(overrides)
        return AttackConfig(self.name, **params)

    def to_dict(self):
        """Returns the hyperparameters, preceded by ``norm`` when the attack has one."""
        fields = OrderedDict()
        if self.norm is not None:
            fields["norm"] = self.norm
        fields.update(self.params)
        return fields


class TrainConfig:
    """
    Hyperparameters of (adversarial) training.

    :ivar epochs: (int) positive number of passes over the dataset
    :ivar batch_size: (int) positive minibatch size
    :ivar lr: (float) non-negative SGD learning rate
    :ivar seed: (int) seed of shuffling and of inner attacks
    :ivar attack: (:class:`AttackConfig` or None) inner attack of
        adversarial training; one of :data:`ITERATIVE`
    """

    def __init__(self, epochs, batch_size, lr, seed=0, attack=None):
        if int(epochs) != epochs or epochs < 1:
            raise ContractError("epochs must be a positive integer, got %r" % (epochs,))
        if int(batch_size) != batch_size or batch_size < 1:
            raise ContractError("batch_size must be a positive integer, got %r" % (batch_size,))
        if not lr >= 0:
            raise ContractError("lr must be non-negative, got %r" % (lr,))
        if attack is not None and not attack.iterative:
            raise ContractError("attack %s cannot be used for adversarial training; use one of %s" %
                                (attack.name, ", ".join(ITERATIVE)))
        self.epochs, self.batch_size, self.lr = int(epochs), int(batch_size), float(lr)
        self.seed, self.attack = seed, attack

    def __repr__(self):
        return "TrainConfig(epochs=%d, batch_size=%d, lr=%r, seed=%r, attack=%r)" % \
            (self.epochs, self.batch_size, self.lr, self.seed, self.attack)


SEED_VARIABLE = "ADVGRAD_SEED"

def default_seed(environ=None):
    """
    Returns the seed given by the ``ADVGRAD_SEED`` environment variable, or 0.

    :raise: :class:`advgrad.tensor.ContractError` if it is not a non-negative integer
    """
    if environ is None:
        environ = os.environ
    value = environ.get(SEED_VARIABLE)
    if value is None or value == "":
        return 0
    if not value.isdigit():
        raise ContractError("%s must be a non-negative integer, got %r" % (SEED_VARIABLE, value))
    return int(value)

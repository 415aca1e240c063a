"""
The :mod:`training` module trains classifiers by minibatch SGD on
softmax cross-entropy, optionally on adversarial examples generated
against the current parameters at every step, and evaluates their
clean and adversarial accuracy.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
from concurrent.futures import ThreadPoolExecutor
import numpy as np
from . import tensor, diagnostic, registry
from .tensor import Tensor, Tape, ContractError, DimensionError


class Dataset:
    """
    Labelled examples.

    :ivar inputs: (:class:`advgrad.tensor.Tensor`) examples, batch first
    :ivar labels: (:class:`numpy.ndarray`) integer labels
    :ivar name: (string) identifier used in diagnostics and reports
    """

    def __init__(self, inputs, labels, name="<dataset>"):
        inputs = tensor.as_tensor(inputs)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != inputs.shape[:1]:
            raise DimensionError("%d labels given for inputs of shape %s" %
                                 (labels.size, inputs.shape))
        self.inputs, self.labels, self.name = inputs, labels, name

    def __repr__(self):
        return "Dataset(%s, %d examples)" % (self.name, len(self))

    def __len__(self):
        return len(self.labels)

    def head(self, limit):
        """Returns the first ``limit`` examples."""
        return Dataset(self.inputs.data[:limit], self.labels[:limit], self.name)


def _fit(model, dataset, cfg, attack, engine):
    if len(dataset) == 0:
        raise ContractError("cannot train on the empty dataset %s" % dataset.name)
    if engine is None:
        engine = diagnostic.Engine()

    inputs, labels = dataset.inputs.data, dataset.labels
    rng = np.random.default_rng(cfg.seed)
    parameters = model.parameters
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for step, begin in enumerate(range(0, len(dataset), cfg.batch_size)):
            batch = order[begin:begin + cfg.batch_size]
            x, y = Tensor._wrap(inputs[batch]), labels[batch]
            current = model.with_parameters(parameters)
            if attack is not None:
                # Inner attack streams never touch the shuffling stream.
                x = registry.run_attack(attack, current, x, y,
                                        seed=registry.derive_seed(cfg.seed, epoch, step))

            with Tape() as tape:
                leaves = [tape.watch(p) for p in parameters]
                loss = tensor.softmax_cross_entropy(
                    current.with_parameters(leaves).predict_logits(x), y)
            grads = tensor.backward(tape, loss)
            parameters = tuple(Tensor._wrap(p.data - cfg.lr * grads[leaf].data)
                               for p, leaf in zip(parameters, leaves))
            total += loss.item() * len(batch)

        engine.process(diagnostic.Diagnostic(
            "remark", "epoch {epoch}: loss {loss:.6f}",
            {"epoch": epoch + 1, "loss": total / len(dataset)}))
    return model.with_parameters(parameters)

def train(model, dataset, cfg, engine=None):
    """
    Minibatch SGD on softmax cross-entropy. Examples are shuffled every
    epoch by a generator seeded with ``cfg.seed``; the mean loss of every
    epoch is reported as a ``remark``.

    :param cfg: (:class:`advgrad.config.TrainConfig`) ``cfg.attack`` is ignored
    :return: a new model; ``model`` is not modified
    :raise: :class:`advgrad.tensor.ContractError` if ``dataset`` is empty
    """
    return _fit(model, dataset, cfg, None, engine)

def adversarial_train(model, dataset, cfg, engine=None):
    """
    Like :func:`train`, but every minibatch is replaced by adversarial
    examples of ``cfg.attack`` generated against the current parameters
    before the SGD step.
    """
    if cfg.attack is None:
        raise ContractError("adversarial training needs an inner attack")
    return _fit(model, dataset, cfg, cfg.attack, engine)


def evaluate(model, dataset, attack=None, defense=None, seed=0, batch_size=100, workers=1,
             attack_defense=None):
    """
    Measures accuracy under the argmax of the logits of ``model``, behind
    ``defense`` if given. With an ``attack``, every chunk of ``batch_size``
    examples is also attacked, with its own seed, against the defended model.
    Chunks may run on ``workers`` threads; the result does not depend on
    their number.

    :param attack_defense: defense the attack differentiates through,
        e.g. ``defense.with_bpda()``; ``defense`` by default
    :return: (dictionary) ``clean_acc`` and, with an attack, ``adv_acc``
    :raise: :class:`advgrad.registry.InvariantError` if the attack breaks
        its budget
    """
    if len(dataset) == 0:
        raise ContractError("cannot evaluate on the empty dataset %s" % dataset.name)
    if batch_size < 1 or workers < 1:
        raise ContractError("batch_size and workers must be positive")
    if attack_defense is None:
        attack_defense = defense

    inputs, labels = dataset.inputs.data, dataset.labels

    def correct(x, y):
        with tensor.no_record():
            if defense is not None:
                x = defense(x)
            return int((model.predict_logits(x).data.argmax(axis=1) == y).sum())

    def run(chunk):
        begin = chunk * batch_size
        x = Tensor._wrap(inputs[begin:begin + batch_size])
        y = labels[begin:begin + batch_size]
        if attack is None:
            return correct(x, y), 0
        x_adv = registry.run_attack(attack, model, x, y,
                                    seed=registry.derive_seed(seed, chunk),
                                    defense=attack_defense)
        return correct(x, y), correct(x_adv, y)

    chunks = range(-(-len(dataset) // batch_size))
    if workers == 1:
        results = [run(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))

    accuracy = {"clean_acc": sum(clean for clean, _ in results) / len(dataset)}
    if attack is not None:
        accuracy["adv_acc"] = sum(adv for _, adv in results) / len(dataset)
    return accuracy

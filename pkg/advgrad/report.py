"""
The :mod:`report` module defines benchmark reports: one JSON object per
line, UTF-8, with keys in a fixed order. A report records everything
needed to rerun the command that produced it; see :func:`replay_arguments`.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
from collections import OrderedDict
import hashlib
import json
import numbers
from . import report_version
from .config import AttackConfig
from .tensor import ContractError

KEYS = ("version", "attack", "config", "defense", "bpda", "model", "model_digest",
        "dataset", "seed", "batch_size", "clean_acc", "adv_acc", "wall_time")
"""Report keys, in output order."""

DATASET_KEYS = ("images", "labels", "digest", "size")


def file_digest(*paths):
    """Returns ``sha256:<hex>`` over the contents of ``paths``, in order."""
    digest = hashlib.sha256()
    for path in paths:
        with open(path, "rb") as f:
            for block in iter(lambda: f.read(1 << 16), b""):
                digest.update(block)
    return "sha256:" + digest.hexdigest()


class AttackReport:
    """
    A benchmark result bound to the configuration that produced it.

    :ivar fields: (:class:`OrderedDict`) values of :data:`KEYS`
    """

    def __init__(self, **fields):
        fields.setdefault("version", report_version())
        self.fields = OrderedDict((key, fields.get(key)) for key in KEYS)
        unexpected = [key for key in fields if key not in KEYS]
        if unexpected:
            raise ContractError("unexpected report fields %s" % ", ".join(unexpected))
        validate(self.fields)

    def __getitem__(self, key):
        return self.fields[key]

    def __repr__(self):
        return "AttackReport(%s)" % self.to_json_line()

    def attack_config(self):
        """Returns the :class:`advgrad.config.AttackConfig` recorded, or None."""
        if self.fields["attack"] is None:
            return None
        return AttackConfig.from_dict(self.fields["attack"], self.fields["config"])

    def to_json_line(self):
        return json.dumps(self.fields, ensure_ascii=False, separators=(", ", ": "))

    @classmethod
    def from_json_line(cls, line):
        fields = json.loads(line, object_pairs_hook=OrderedDict)
        if not isinstance(fields, dict):
            raise ContractError("a report line must hold a JSON object")
        return cls(**fields)


def _fraction(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool) and 0 <= value <= 1

def validate(fields):
    """
    Checks a report against the schema.

    :raise: :class:`advgrad.tensor.ContractError` naming the first problem
    """
    missing = [key for key in KEYS if key not in fields]
    if missing:
        raise ContractError("report is missing %s" % ", ".join(missing))

    def require(condition, message, *arguments):
        if not condition:
            raise ContractError("report " + message % arguments)

    version = fields["version"]
    require(isinstance(version, str) and len(version.split(".")) == 2 and
            all(part.isdigit() for part in version.split(".")),
            "version must be MAJOR.MINOR, got %r", version)
    require(isinstance(fields["defense"], str), "defense must be a pipeline string")
    require(isinstance(fields["bpda"], bool), "bpda must be a boolean")
    require(isinstance(fields["model"], str), "model must be a path")
    require(isinstance(fields["model_digest"], str) and
            fields["model_digest"].startswith("sha256:"), "model_digest must be a sha256 digest")
    dataset = fields["dataset"]
    require(isinstance(dataset, dict) and all(key in dataset for key in DATASET_KEYS),
            "dataset must hold %s", ", ".join(DATASET_KEYS))
    require(isinstance(dataset["size"], int) and dataset["size"] > 0,
            "dataset size must be a positive integer")
    require(isinstance(fields["seed"], int) and fields["seed"] >= 0,
            "seed must be a non-negative integer")
    require(isinstance(fields["batch_size"], int) and fields["batch_size"] > 0,
            "batch_size must be a positive integer")
    require(_fraction(fields["clean_acc"]), "clean_acc must be in [0, 1]")
    require(isinstance(fields["wall_time"], numbers.Real) and fields["wall_time"] >= 0,
            "wall_time must be non-negative")

    if fields["attack"] is None:
        require(fields["config"] is None and fields["adv_acc"] is None,
                "without an attack has no config and no adv_acc")
    else:
        require(isinstance(fields["config"], dict), "config must be an object")
        AttackConfig.from_dict(fields["attack"], fields["config"])
        require(_fraction(fields["adv_acc"]), "adv_acc must be in [0, 1]")


def _flag(name):
    return "--" + name.replace("_", "-")

def _value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)

def replay_arguments(report):
    """
    Returns command line arguments that rerun the command which
    produced ``report``; with the same build, the rerun reproduces
    ``adv_acc`` exactly.
    """
    fields = report.fields if isinstance(report, AttackReport) else report
    if fields["attack"] is None:
        arguments = ["eval"]
    elif fields["defense"] or fields["bpda"]:
        arguments = ["defend-eval", "--attack", fields["attack"]]
    else:
        arguments = ["attack", "--attack", fields["attack"]]

    dataset = fields["dataset"]
    arguments += ["--model", fields["model"],
                  "--images", dataset["images"], "--labels", dataset["labels"],
                  "--limit", str(dataset["size"]),
                  "--seed", str(fields["seed"]), "--batch-size", str(fields["batch_size"])]
    if arguments[0] == "defend-eval":
        arguments += ["--defense", fields["defense"]]
        if fields["bpda"]:
            arguments.append("--bpda")
    elif arguments[0] == "eval" and fields["defense"]:
        arguments += ["--defense", fields["defense"]]

    for key, value in (fields["config"] or {}).items():
        if key != "norm":
            arguments += [_flag(key), _value(value)]
    return arguments

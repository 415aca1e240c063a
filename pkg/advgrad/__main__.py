"""
Command line front end: ::

    python -m advgrad train --images I --labels L --out model.advg [--adv ...]
    python -m advgrad attack --model M --images I --labels L --attack pgd-linf \\
        --loss ce --eps 0.3 --nb-iter 40 --eps-iter 0.01 --rand-init true
    python -m advgrad defend-eval ... --defense median:3,bitsqueeze:1 [--bpda]
    python -m advgrad eval --model M --images I --labels L [--defense ...]

``attack``, ``defend-eval`` and ``eval`` print one JSON report per line.
Exit codes: 0 on success, 2 on usage errors, 3 on malformed, unreadable
or mutually incompatible data and model files, 4 when an attack breaks
its constraints.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import argparse
import sys
import time
from . import __version__, config, diagnostic, idx, models, parser, report, training
from .config import AttackConfig, TrainConfig, PARAMETERS, SCHEMAS, MANDATORY, ITERATIVE
from .registry import InvariantError
from .tensor import ContractError, NonFiniteError

EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 2, 3, 4

DEFAULT_ARCHITECTURE = "mlp:784-128-64-10"


class _UsageError(Exception):
    pass

def _parse_flag(parse, *arguments):
    # The diagnostic is already rendered; malformed flag text is a usage error.
    try:
        return parse(*arguments)
    except diagnostic.Error:
        raise _UsageError()


def _boolean(text):
    if text not in ("true", "false"):
        raise argparse.ArgumentTypeError("expected true or false, got %r" % text)
    return text == "true"

def _flag(name):
    return "--" + name.replace("_", "-")

def _add_attack_flags(subparser, names):
    group = subparser.add_argument_group("attack hyperparameters",
                                         "defaults come from the attack presets")
    for name in names:
        kind, _, description = PARAMETERS[name]
        if kind is bool:
            kind = _boolean
        elif name == "loss":
            kind = str
        group.add_argument(_flag(name), dest=name, type=kind, default=None,
                           help="%s (%s)" % (name.replace("_", " "), description))
    subparser.set_defaults(attack_flags=tuple(names))

def _add_data_flags(subparser):
    subparser.add_argument("--images", required=True, help="IDX images file")
    subparser.add_argument("--labels", required=True, help="IDX labels file")
    subparser.add_argument("--limit", type=int, default=None,
                           help="use only the first LIMIT examples")
    subparser.add_argument("--batch-size", type=int, default=100)
    subparser.add_argument("--seed", type=int, default=None,
                           help="random seed; defaults to $%s or 0" % config.SEED_VARIABLE)

def _add_evaluation_flags(subparser, attack):
    subparser.add_argument("--model", required=True, help="model file")
    _add_data_flags(subparser)
    subparser.add_argument("--workers", type=int, default=1,
                           help="threads evaluating chunks of BATCH_SIZE examples")
    subparser.add_argument("--out", default=None,
                           help="append the report to OUT instead of printing it")
    if attack:
        subparser.add_argument("--attack", required=True, choices=list(SCHEMAS))
        _add_attack_flags(subparser, list(PARAMETERS))

def make_parser():
    arguments = argparse.ArgumentParser(
        prog="advgrad", description="Adversarial attack and defense benchmarks.")
    arguments.add_argument("--version", action="version", version="%(prog)s " + __version__)
    commands = arguments.add_subparsers(dest="command", metavar="command")
    commands.required = True

    train = commands.add_parser("train", help="train a classifier")
    _add_data_flags(train)
    train.add_argument("--arch", default=DEFAULT_ARCHITECTURE,
                       help="architecture descriptor (default: %(default)s)")
    train.add_argument("--epochs", type=int, default=5)
    train.add_argument("--lr", type=float, default=0.1, help="SGD learning rate")
    train.add_argument("--out", required=True, help="model file to write")
    train.add_argument("--adv", action="store_true",
                       help="train on adversarial examples of --attack")
    train.add_argument("--attack", choices=ITERATIVE, default="pgd-linf")
    _add_attack_flags(train, [name for name in PARAMETERS
                              if any(name in SCHEMAS[iterative] for iterative in ITERATIVE)])

    attack_command = commands.add_parser("attack", help="measure accuracy under attack")
    _add_evaluation_flags(attack_command, attack=True)

    defend = commands.add_parser("defend-eval",
                                 help="measure accuracy of a defended model under attack")
    _add_evaluation_flags(defend, attack=True)
    defend.add_argument("--defense", required=True,
                        help="defense pipeline, e.g. median:3,bitsqueeze:1")
    defend.add_argument("--bpda", action="store_true",
                        help="attack through straight-through approximations of "
                             "non-differentiable stages")

    evaluate = commands.add_parser("eval", help="measure clean accuracy")
    _add_evaluation_flags(evaluate, attack=False)
    evaluate.add_argument("--defense", default="", help="defense pipeline")
    return arguments


def _attack_config(args, mandatory):
    given = {name: getattr(args, name) for name in args.attack_flags
             if getattr(args, name) is not None}
    schema = SCHEMAS[args.attack]
    refused = [_flag(name) for name in given if name not in schema]
    if refused:
        raise _UsageError("attack %s does not take %s" % (args.attack, ", ".join(refused)))
    if mandatory:
        missing = [_flag(name) for name in MANDATORY.get(args.attack, ()) if name not in given]
        if missing:
            raise _UsageError("attack %s requires %s" % (args.attack, ", ".join(missing)))
    return AttackConfig.preset(args.attack, **given)

def _load_dataset(args, engine, architecture):
    if args.limit is not None and args.limit < 1:
        raise _UsageError("--limit must be positive")
    loaded = idx.load_idx(args.images, args.labels, engine)
    loaded.check_fits(architecture.input_shape, architecture.classes, engine, args.limit)
    dataset = loaded.as_dataset()
    if args.limit is not None:
        dataset = dataset.head(args.limit)
    return dataset


def cmd_train(args, engine, stdout):
    attack = _attack_config(args, mandatory=False) if args.adv else None
    cfg = TrainConfig(args.epochs, args.batch_size, args.lr, args.seed, attack)
    architecture = _parse_flag(models.parse_architecture, args.arch, engine)
    dataset = _load_dataset(args, engine, architecture)

    model = models.init_params(architecture, args.seed)
    if attack is None:
        model = training.train(model, dataset, cfg, engine)
    else:
        model = training.adversarial_train(model, dataset, cfg, engine)
    models.save_model(model, args.out)
    return 0

def cmd_evaluate(args, engine, stdout):
    start = time.perf_counter()
    attack = _attack_config(args, mandatory=True) if args.command != "eval" else None
    pipeline = _parse_flag(parser.parse_pipeline, getattr(args, "defense", ""), engine,
                           "--defense")
    bpda = getattr(args, "bpda", False)
    model = models.load_model(args.model, engine)
    dataset = _load_dataset(args, engine, model.architecture)

    defense = pipeline if len(pipeline) else None
    accuracy = training.evaluate(
        model, dataset, attack, defense, args.seed, args.batch_size, args.workers,
        attack_defense=pipeline.with_bpda() if bpda and defense else defense)

    result = report.AttackReport(
        attack=attack.name if attack else None,
        config=attack.to_dict() if attack else None,
        defense=pipeline.describe(),
        bpda=bpda,
        model=args.model,
        model_digest=report.file_digest(args.model),
        dataset={"images": args.images, "labels": args.labels,
                 "digest": report.file_digest(args.images, args.labels),
                 "size": len(dataset)},
        seed=args.seed,
        batch_size=args.batch_size,
        clean_acc=accuracy["clean_acc"],
        adv_acc=accuracy.get("adv_acc"),
        wall_time=round(time.perf_counter() - start, 3))

    line = result.to_json_line() + "\n"
    if args.out:
        with open(args.out, "a", encoding="utf-8") as f:
            f.write(line)
    else:
        stdout.write(line)
    return 0

COMMANDS = {
    "train": cmd_train,
    "attack": cmd_evaluate,
    "defend-eval": cmd_evaluate,
    "eval": cmd_evaluate,
}


def main(argv=None, stdout=None, engine=None, environ=None):
    """
    Runs the command line ``argv`` and returns the exit code.
    """
    if stdout is None:
        stdout = sys.stdout
    if engine is None:
        engine = diagnostic.Engine()

    def report_error(message):
        engine.process(diagnostic.Diagnostic("error", "{message}", {"message": message}))

    arguments = make_parser()
    try:
        args = arguments.parse_args(argv)
    except SystemExit as exit:
        return exit.code

    try:
        if args.seed is None:
            args.seed = config.default_seed(environ)
        if args.seed < 0:
            raise _UsageError("--seed must be non-negative")
        if args.batch_size < 1 or getattr(args, "workers", 1) < 1:
            raise _UsageError("--batch-size and --workers must be positive")
        return COMMANDS[args.command](args, engine, stdout)
    except (_UsageError, ContractError) as error:
        if str(error):
            report_error(str(error))
        return EXIT_USAGE
    except diagnostic.Error:
        return EXIT_DATA
    except OSError as error:
        report_error("%s: %s" % (error.filename or "", error.strerror or error))
        return EXIT_DATA
    except (InvariantError, NonFiniteError) as error:
        report_error(str(error))
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

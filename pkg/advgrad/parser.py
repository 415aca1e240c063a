"""
The :mod:`parser` module concerns itself with parsing the descriptor
strings advgrad accepts: defense pipelines and architecture descriptors.

The defense pipeline grammar is ::

    pipeline ::= [ stage ( "," stage )* ]
    stage    ::= name ( ":" param )*
    param    ::= int | float | name

for example ``median:3,bitsqueeze:1`` or ``gaussian:5:1.5,jpeg:75``.
Stages apply in the order they are listed.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
from . import source, diagnostic, lexer, defense
from .tensor import ContractError
import regex as re

class Stage:
    """
    One parsed pipeline stage.

    :ivar name: (string) defense name
    :ivar params: (list) parameter values
    :ivar name_loc: (:class:`advgrad.source.Range`) location of the name
    :ivar param_locs: (list of :class:`advgrad.source.Range`) parameter locations
    :ivar loc: (:class:`advgrad.source.Range`) location of the whole stage
    """
    def __init__(self, name, params, name_loc, param_locs, loc):
        self.name, self.params = name, params
        self.name_loc, self.param_locs, self.loc = name_loc, param_locs, loc

    def __repr__(self):
        return "Stage(%s, %s)" % (self.name, self.params)


class Parser:
    """
    The :class:`Parser` class turns a pipeline string into
    a :class:`advgrad.defense.DefensePipeline`.

    :ivar lexer: (:class:`advgrad.lexer.Lexer`) token source
    :ivar diagnostic_engine: (:class:`advgrad.diagnostic.Engine`)
    """

    def __init__(self, lexer, diagnostic_engine):
        self.lexer = lexer
        self.diagnostic_engine = diagnostic_engine

    def _fail(self, reason, arguments, loc, notes=None):
        self.diagnostic_engine.process(diagnostic.Diagnostic(
            "fatal", reason, arguments, loc, notes=notes))

    def _expect(self, *kinds):
        token = self.lexer.next()
        if token.kind not in kinds:
            actual = "end of input" if token.kind == "eof" else repr(token.loc.source())
            self._fail("unexpected {actual}: expected {expected}",
                       {"actual": actual, "expected": " or ".join(kinds)},
                       token.loc)
        return token

    def stage(self):
        name = self._expect("ident")
        params, param_locs, end = [], [], name.loc
        while self.lexer.peek().kind == ":":
            self.lexer.next()
            param = self._expect("int", "float", "ident")
            params.append(param.value)
            param_locs.append(param.loc)
            end = param.loc
        return Stage(name.value, params, name.loc, param_locs, name.loc.join(end))

    def stages(self):
        """Parses the whole input into a list of :class:`Stage`."""
        if self.lexer.peek().kind == "eof":
            return []
        result = [self.stage()]
        while self._expect(",", "eof").kind == ",":
            result.append(self.stage())
        return result

    def pipeline(self):
        """
        Parses the whole input and builds the defense of every stage.
        """
        return defense.DefensePipeline([self._build(stage) for stage in self.stages()])

    def _build(self, stage):
        if stage.name not in defense.STAGES:
            self._fail("unknown defense {name!r}; known defenses are {known}",
                       {"name": stage.name,
                        "known": ", ".join(sorted(defense.STAGES))},
                       stage.name_loc)

        factory, signature = defense.STAGES[stage.name]
        variadic = signature.endswith("*")
        fixed = signature.rstrip("*")
        if len(stage.params) < len(fixed) or \
                (not variadic and len(stage.params) > len(fixed)):
            self._fail("defense {name} takes {expected} parameter(s), got {actual}",
                       {"name": stage.name,
                        "expected": ("at least %d" if variadic else "%d") % len(fixed),
                        "actual": len(stage.params)},
                       stage.loc)

        values = []
        for index, (value, loc) in enumerate(zip(stage.params, stage.param_locs)):
            kind = fixed[index] if index < len(fixed) else "f"
            if kind == "i" and not isinstance(value, int) or \
                    kind == "f" and not isinstance(value, (int, float)):
                self._fail("parameter {index} of {name} must be {kind}",
                           {"index": index + 1, "name": stage.name,
                            "kind": "an integer" if kind == "i" else "a number"},
                           loc)
            values.append(float(value) if kind == "f" else value)

        try:
            return factory(*values)
        except ContractError as error:
            self._fail("invalid parameters for {name}: {reason}",
                       {"name": stage.name, "reason": str(error)},
                       stage.loc)


def parse_pipeline(text, engine=None, name="<pipeline>"):
    """
    Parses a defense pipeline string.

    :return: (:class:`advgrad.defense.DefensePipeline`)
    :raise: :class:`advgrad.diagnostic.Error` if the string is malformed,
        names an unknown defense or gives invalid parameters
    """
    if engine is None:
        engine = diagnostic.Engine()
    buffer = source.Buffer(text, name)
    return Parser(lexer.Lexer(buffer, engine), engine).pipeline()


_mlp_re = re.compile(r"mlp:(?P<widths>[0-9]+(?:-[0-9]+)+)")
_conv_re = re.compile(r"""
    conv:(?P<input>[0-9]+x[0-9]+x[0-9]+)
    :(?P<convs>[0-9]+k[0-9]+s[0-9]+p[0-9]+(?:,[0-9]+k[0-9]+s[0-9]+p[0-9]+)*)
    :(?P<widths>[0-9]+(?:-[0-9]+)*)
""", re.VERBOSE)
_conv_layer_re = re.compile(r"([0-9]+)k([0-9]+)s([0-9]+)p([0-9]+)")

def parse_architecture(buffer, engine=None):
    """
    Parses an architecture descriptor held in ``buffer``: either
    ``mlp:<width>-<width>[-<width>...]`` or
    ``conv:<C>x<H>x<W>:<F>k<K>s<S>p<P>[,...]:<width>[-<width>...]``.

    :return: (``kind``, dictionary of constructor fields)
    :raise: :class:`advgrad.diagnostic.Error` if the descriptor is malformed
    """
    if engine is None:
        engine = diagnostic.Engine()
    text = buffer.source

    match = _mlp_re.fullmatch(text)
    if match:
        return "mlp", {"widths": [int(w) for w in match.group("widths").split("-")]}

    match = _conv_re.fullmatch(text)
    if match:
        return "conv", {
            "input_shape": [int(d) for d in match.group("input").split("x")],
            "convs": [tuple(int(v) for v in layer)
                      for layer in _conv_layer_re.findall(match.group("convs"))],
            "widths": [int(w) for w in match.group("widths").split("-")],
        }

    # Point at the first character no descriptor could continue with.
    pattern = _mlp_re if text.startswith("m") else _conv_re
    offset = len(text)
    while offset > 0 and pattern.fullmatch(text[:offset], partial=True) is None:
        offset -= 1
    engine.process(diagnostic.Diagnostic(
        "fatal", "malformed architecture descriptor {text!r}", {"text": text},
        source.Range(buffer, offset, min(offset + 1, len(text)))))

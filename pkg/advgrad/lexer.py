"""
The :mod:`lexer` module concerns itself with tokenizing the short
descriptor strings accepted on the command line, such as the
defense pipeline ``median:3,bitsqueeze:1``.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
from . import source, diagnostic
import regex as re

class Token:
    """
    The :class:`Token` encapsulates a single lexer token and its location
    in the source string.

    :ivar loc: (:class:`advgrad.source.Range`) token location
    :ivar kind: (string) token kind: ``ident``, ``int``, ``float``,
        one of the punctuation characters, or ``eof``
    :ivar value: token value; None or a kind-specific value
    """
    def __init__(self, loc, kind, value=None):
        self.loc, self.kind, self.value = loc, kind, value

    def __repr__(self):
        return "Token(%s, \"%s\", %s)" % (repr(self.loc), self.kind, repr(self.value))

class Lexer:
    """
    The :class:`Lexer` class extracts tokens from
    a :class:`advgrad.source.Buffer`.

    :class:`Lexer` is an iterable.

    :ivar source_buffer: (:class:`advgrad.source.Buffer`)
        the source buffer
    :ivar diagnostic_engine: (:class:`advgrad.diagnostic.Engine`)
        the diagnostic engine
    :ivar offset: (integer) character offset into ``source_buffer``
        indicating where the next token will be recognized
    :ivar punctuation: (string) characters lexed as single-character tokens
    """

    # Every match has exactly one non-empty group, selecting the token kind.
    # Numbers come before identifiers so that "1e-3" is not split.
    _lex_token_re = re.compile(r"""
    [ \t]* # initial whitespace
    (?:
        ( [+-]? (?: [0-9]+ \. [0-9]* | \. [0-9]+ | [0-9]+ (?= [eE]) )
              (?: [eE] [+-]? [0-9]+ )? ) # 1 float
    |   ( [+-]? [0-9]+ ) (?! [0-9A-Za-z_.]) # 2 integer
    |   ( [A-Za-z_] [A-Za-z0-9_-]* ) # 3 identifier
    |   ( \S ) # 4 punctuation or garbage
    )
    """, re.VERBOSE)

    def __init__(self, source_buffer, diagnostic_engine, punctuation=":,"):
        self.source_buffer = source_buffer
        self.diagnostic_engine = diagnostic_engine
        self.punctuation = punctuation
        self.offset = 0
        self.queue = []

    def __iter__(self):
        return self

    def __next__(self):
        token = self.next()
        if token.kind == "eof":
            raise StopIteration
        return token

    def peek(self):
        """Returns the next token without consuming it."""
        if not self.queue:
            self.queue.append(self._lex())
        return self.queue[0]

    def next(self):
        """Returns the next token, or an ``eof`` token at the end of input."""
        if self.queue:
            return self.queue.pop(0)
        return self._lex()

    def _lex(self):
        match = self._lex_token_re.match(self.source_buffer.source, self.offset)
        if match is None: # only whitespace remains
            end = len(self.source_buffer.source)
            self.offset = end
            return Token(source.Range(self.source_buffer, end, end), "eof")

        self.offset = match.end(0)
        group = match.lastindex
        tok_range = source.Range(self.source_buffer,
                                 match.start(group), match.end(group))
        text = match.group(group)
        if group == 1:
            return Token(tok_range, "float", float(text))
        elif group == 2:
            return Token(tok_range, "int", int(text))
        elif group == 3:
            return Token(tok_range, "ident", text)
        elif text in self.punctuation:
            return Token(tok_range, text)
        else:
            error = diagnostic.Diagnostic(
                "fatal", "unexpected {character}", {"character": repr(text)},
                tok_range)
            self.diagnostic_engine.process(error)

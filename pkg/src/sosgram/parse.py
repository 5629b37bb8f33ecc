"""Recursive-descent parser for polynomial expressions.

Grammar::

    expr   := ['-'] term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := base ('^' INT)?
    base   := NUMBER | IDENT | '(' expr ')'
"""

import re

from .poly import Polynomial

__all__ = ["parse", "PolySyntaxError"]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*^()])
    """,
    re.VERBOSE,
)


class PolySyntaxError(ValueError):
    """Malformed polynomial text; ``pos`` is the 0-based character offset."""

    def __init__(self, message, text, pos):
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at position {pos}: {text!r}")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PolySyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise PolySyntaxError(message, self.text, tok[2])

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] == "number":
            self.fail(f"expected {value!r}, found {tok[1] or 'end of input'!r}")
        return self.take()

    def expr(self):
        negate = False
        if self.peek()[:2] == ("op", "-"):
            self.take()
            negate = True
        value = self.term()
        if negate:
            value = -value
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self):
        value = self.factor()
        while self.peek()[:2] == ("op", "*"):
            self.take()
            value = value * self.factor()
        return value

    def factor(self):
        value = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            tok = self.peek()
            if tok[:2] == ("op", "-"):
                self.fail("negative exponent")
            if tok[0] != "number":
                self.fail(f"expected integer exponent, found {tok[1] or 'end of input'!r}")
            if not tok[1].isdigit():
                self.fail(f"exponent must be a nonnegative integer, found {tok[1]!r}")
            self.take()
            value = value ** int(tok[1])
        return value

    def base(self):
        tok = self.peek()
        kind, text, _ = tok
        if kind == "number":
            self.take()
            return Polynomial.const(float(text))
        if kind == "ident":
            self.take()
            return Polynomial.var(text)
        if tok[:2] == ("op", "("):
            self.take()
            value = self.expr()
            self.expect(")")
            return value
        self.fail(f"unexpected {text or 'end of input'!r}")


def parse(text):
    """Parse ``text`` into a canonical :class:`Polynomial`.

    >>> str(parse("(x1+x2)^2"))
    'x1^2 + 2*x1*x2 + x2^2'
    """
    if not isinstance(text, str):
        raise TypeError("parse expects a string")
    p = _Parser(text)
    value = p.expr()
    if p.peek()[0] != "end":
        p.fail(f"unexpected {p.peek()[1]!r}")
    return value

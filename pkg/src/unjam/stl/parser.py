"""Text syntax for STL formulas.

Grammar (precedence low to high: `|`, `&`, `U`, unary):

    expr     := or
    or       := and ('|' and)*
    and      := until ('&' until)*
    until    := unary ('U' interval? unary)*
    unary    := '!' unary | G/F interval? '(' expr ')' | '(' expr ')'
              | 'true' | IDENT CMP NUMBER
    interval := '[' NUMBER ',' NUMBER ']'

Unbounded operators are written without an interval; `inf` is accepted as
an interval endpoint. `to_text` emits this syntax and `parse(to_text(f))`
is structurally identical to `f`.
"""

from __future__ import annotations

import math
import re

from .formula import (
    Atom,
    Eventually,
    Formula,
    Globally,
    Not,
    And,
    Or,
    TrueFormula,
    Until,
)

_RESERVED = {"G", "F", "U", "true"}

_TOKEN_RE = re.compile(
    r"""
    (?P<WS>\s+)
  | (?P<NUMBER>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf\b)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<CMP><=|>=|<|>)
  | (?P<LBRACK>\[) | (?P<RBRACK>\])
  | (?P<LPAREN>\() | (?P<RPAREN>\))
  | (?P<COMMA>,) | (?P<AMP>&) | (?P<PIPE>\|) | (?P<BANG>!)
    """,
    re.VERBOSE,
)


class StlSyntaxError(ValueError):
    """Parse failure with the offending position in the source text."""

    def __init__(self, message: str, text: str, pos: int):
        self.pos = pos
        self.text = text
        caret = " " * pos + "^"
        super().__init__(f"{message} at position {pos}\n  {text}\n  {caret}")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise StlSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "WS":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("EOF", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str = None):
        tok = self.peek()
        if tok[0] != kind:
            want = what or kind
            raise StlSyntaxError(
                f"expected {want}, found {tok[1]!r}" if tok[1] else f"expected {want}",
                self.text,
                tok[2],
            )
        return self.advance()

    def fail(self, message: str):
        raise StlSyntaxError(message, self.text, self.peek()[2])

    # --- grammar rules ---

    def expr(self) -> Formula:
        node = self.and_expr()
        while self.peek()[0] == "PIPE":
            self.advance()
            node = Or(node, self.and_expr())
        return node

    def and_expr(self) -> Formula:
        node = self.until_expr()
        while self.peek()[0] == "AMP":
            self.advance()
            node = And(node, self.until_expr())
        return node

    def until_expr(self) -> Formula:
        node = self.unary()
        while self.peek()[0] == "IDENT" and self.peek()[1] == "U":
            self.advance()
            a, b = self.maybe_interval()
            node = Until(a, b, node, self.unary())
        return node

    def maybe_interval(self):
        if self.peek()[0] != "LBRACK":
            return 0.0, math.inf
        self.advance()
        a = self.number()
        self.expect("COMMA", "','")
        b = self.number()
        self.expect("RBRACK", "']'")
        if not (0 <= a <= b):
            self.fail(f"invalid interval [{a}, {b}]")
        return a, b

    def number(self) -> float:
        tok = self.expect("NUMBER", "a number")
        return float(tok[1])

    def unary(self) -> Formula:
        kind, value, pos = self.peek()
        if kind == "BANG":
            self.advance()
            return Not(self.unary())
        if kind == "IDENT" and value in ("G", "F"):
            self.advance()
            a, b = self.maybe_interval()
            self.expect("LPAREN", "'('")
            child = self.expr()
            self.expect("RPAREN", "')'")
            return Globally(a, b, child) if value == "G" else Eventually(a, b, child)
        if kind == "LPAREN":
            self.advance()
            node = self.expr()
            self.expect("RPAREN", "')'")
            return node
        if kind == "IDENT" and value == "true":
            self.advance()
            return TrueFormula()
        if kind == "IDENT":
            if value in _RESERVED:
                self.fail(f"{value!r} is reserved")
            self.advance()
            cmp_tok = self.expect("CMP", "a comparator (<, <=, >, >=)")
            threshold = self.number()
            return Atom(value, cmp_tok[1], threshold)
        self.fail("expected a formula")


def parse(text: str) -> Formula:
    """Parse an STL formula from text; raises StlSyntaxError with position."""
    parser = _Parser(text)
    node = parser.expr()
    tok = parser.peek()
    if tok[0] != "EOF":
        raise StlSyntaxError(f"unexpected trailing {tok[1]!r}", text, tok[2])
    return node


def _num(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def _interval_text(a: float, b: float) -> str:
    if a == 0.0 and math.isinf(b):
        return ""
    return f"[{_num(a)},{_num(b)}]"


def to_text(formula: Formula) -> str:
    """Render a formula in the grammar `parse` accepts (round-trips)."""
    if isinstance(formula, TrueFormula):
        return "true"
    if isinstance(formula, Atom):
        return f"{formula.channel} {formula.comparator} {_num(formula.threshold)}"
    if isinstance(formula, Not):
        return f"!({to_text(formula.child)})"
    if isinstance(formula, And):
        return f"({to_text(formula.left)} & {to_text(formula.right)})"
    if isinstance(formula, Or):
        return f"({to_text(formula.left)} | {to_text(formula.right)})"
    if isinstance(formula, Globally):
        return f"G{_interval_text(formula.a, formula.b)}({to_text(formula.child)})"
    if isinstance(formula, Eventually):
        return f"F{_interval_text(formula.a, formula.b)}({to_text(formula.child)})"
    if isinstance(formula, Until):
        iv = _interval_text(formula.a, formula.b)
        return f"({to_text(formula.left)} U{iv} {to_text(formula.right)})"
    raise TypeError(f"not a formula: {formula!r}")

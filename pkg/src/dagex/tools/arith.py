"""Exact rational arithmetic over + - * / with parentheses and unary minus."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction


class ParseError(ValueError):
    def __init__(self, position: int, message: str):
        super().__init__(f"{message} at position {position}")
        self.position = position


class DivisionByZero(ZeroDivisionError):
    pass


_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d*)?|\.\d+)|(.))")


@dataclass(frozen=True)
class Tok:
    kind: str  # "num", "op", "end"
    text: str
    pos: int


def tokenize(source: str) -> list[Tok]:
    toks: list[Tok] = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            break
        if m.group(1) is not None:
            toks.append(Tok("num", m.group(1), m.start(1)))
        elif m.group(2) is not None:
            if m.group(2) not in "+-*/()":
                raise ParseError(m.start(2), f"unexpected character {m.group(2)!r}")
            toks.append(Tok("op", m.group(2), m.start(2)))
        pos = m.end()
    toks.append(Tok("end", "", len(source)))
    return toks


class _Parser:
    # expr   := term (("+"|"-") term)*
    # term   := unary (("*"|"/") unary)*
    # unary  := "-" unary | "+" unary | atom
    # atom   := NUMBER | "(" expr ")"

    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    @property
    def cur(self) -> Tok:
        return self.toks[self.i]

    def take(self) -> Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def parse(self) -> Fraction:
        if self.cur.kind == "end":
            raise ParseError(self.cur.pos, "empty expression")
        value = self.expr()
        if self.cur.kind != "end":
            raise ParseError(self.cur.pos, f"unexpected {self.cur.text!r}")
        return value

    def expr(self) -> Fraction:
        value = self.term()
        while self.cur.kind == "op" and self.cur.text in "+-":
            op = self.take().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> Fraction:
        value = self.unary()
        while self.cur.kind == "op" and self.cur.text in "*/":
            op = self.take()
            rhs = self.unary()
            if op.text == "*":
                value = value * rhs
            else:
                if rhs == 0:
                    raise DivisionByZero(f"division by zero at position {op.pos}")
                value = value / rhs
        return value

    def unary(self) -> Fraction:
        if self.cur.kind == "op" and self.cur.text in "+-":
            op = self.take().text
            value = self.unary()
            return -value if op == "-" else value
        return self.atom()

    def atom(self) -> Fraction:
        tok = self.cur
        if tok.kind == "num":
            self.take()
            return Fraction(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            value = self.expr()
            if not (self.cur.kind == "op" and self.cur.text == ")"):
                raise ParseError(self.cur.pos, "expected ')'")
            self.take()
            return value
        raise ParseError(tok.pos, "expected a number or '('" if tok.kind != "end" else "unexpected end of input")


def evaluate(source: str) -> Fraction:
    return _Parser(source).parse()


def format_number(value: Fraction) -> str:
    """Integers print exactly; other values print as the shortest round-trip float."""
    if value.denominator == 1:
        return str(value.numerator)
    return repr(float(value))


_FORMULA_TOKEN = re.compile(r"^[\d.,()+\-*/]+$")
_THOUSANDS = re.compile(r"(?<=\d),(?=\d{3}\b)")


def extract_formula(problem: str) -> str:
    """Keep only the arithmetic tokens of a text that mixes prose and numbers.

    Whitespace-separated tokens made solely of digits, operators and
    parentheses survive; thousands separators and trailing sentence
    punctuation are dropped first.
    """
    kept = []
    for raw in problem.split():
        tok = _THOUSANDS.sub("", raw).rstrip(".,;:")
        if tok and _FORMULA_TOKEN.match(tok):
            kept.append(tok)
    return " ".join(kept)

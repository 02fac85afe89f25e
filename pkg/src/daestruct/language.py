"""Line-oriented model language and the :class:`Model` container.

::

    model tank1
    var C0, C1, V1, q
    input Q, C1spec
    eq der(C1, 1) = q * (C0 - C1) / V1
    eq der(V1, 1) = 0
    eq q = Q
    eq C1 = C1spec

Declarations may appear in any order relative to the equations.  ``#``
starts a comment.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .errors import ParseError, UndeclaredIdentifier
from .expr import (
    FUNCTIONS,
    T,
    Const,
    Driver,
    Expr,
    Var,
    add,
    div,
    func,
    mul,
    neg,
    power,
    sub,
    symbols,
    to_text,
)

log = logging.getLogger(__name__)

KEYWORDS = ("model", "var", "input", "eq")
RESERVED = {"t", "der", *FUNCTIONS, *KEYWORDS}

_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+\.\d*|\.\d+|\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),=]))"
)


@dataclass(frozen=True)
class Model:
    """A square DAE: ``equations[i] = 0`` for each ``i`` over ``variables``,
    with ``drivers`` as prescribed functions of ``t``."""

    name: str
    variables: tuple[str, ...]
    drivers: tuple[str, ...]
    equations: tuple[Expr, ...]

    def __post_init__(self):
        names = list(self.variables) + list(self.drivers)
        duplicates = {n for n in names if names.count(n) > 1}
        if duplicates:
            raise ValueError(f"identifiers declared twice: {sorted(duplicates)}")
        declared_vars = set(self.variables)
        declared_drivers = set(self.drivers)
        for i, eq in enumerate(self.equations):
            for s in symbols(eq):
                pool = declared_vars if isinstance(s, Var) else declared_drivers
                if s.name not in pool:
                    raise ValueError(f"equation {i + 1} references undeclared {to_text(s)}")

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def is_square(self) -> bool:
        return len(self.equations) == len(self.variables)

    def variable_index(self, name: str) -> int:
        return self.variables.index(name)


class _Lexer:
    def __init__(self, text: str, line: int, offset: int):
        self.tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                col = offset + pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
                raise ParseError(f"unexpected character {text[pos:].strip()[0]!r}", line, col)
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), offset + start + 1))
            pos = m.end()
        self.line = line
        self.end_column = offset + len(text) + 1
        self.i = 0

    def peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i]
        return ("end", "", self.end_column)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, col = self.next()
        if text != value or kind == "end":
            found = "end of line" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", self.line, col)

    def error(self, message: str, col: int | None = None):
        return ParseError(message, self.line, self.peek()[2] if col is None else col)


class _ExprParser:
    """Recursive descent over one line.

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | '+' unary | power
    power := atom ('^' integer)?
    """

    def __init__(self, lexer: _Lexer, variables, drivers, allow_any: bool = False):
        self.lex = lexer
        self.variables = set(variables)
        self.drivers = set(drivers)
        self.allow_any = allow_any

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.lex.peek()[1] in ("+", "-") and self.lex.peek()[0] == "op":
            op = self.lex.next()[1]
            rhs = self.term()
            terms.append(rhs if op == "+" else neg(rhs))
        return add(*terms) if len(terms) > 1 else terms[0]

    def term(self) -> Expr:
        factors = [self.unary()]
        while self.lex.peek()[1] in ("*", "/") and self.lex.peek()[0] == "op":
            op = self.lex.next()[1]
            rhs = self.unary()
            if op == "*":
                factors.append(rhs)
            else:
                factors = [div(_product(factors), rhs)]
        return _product(factors)

    def unary(self) -> Expr:
        kind, text, _ = self.lex.peek()
        if kind == "op" and text == "-":
            self.lex.next()
            return neg(self.unary())
        if kind == "op" and text == "+":
            self.lex.next()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.lex.peek()[1] == "^":
            self.lex.next()
            return power(base, self.integer())
        return base

    def integer(self) -> int:
        kind, text, col = self.lex.peek()
        if text == "(":
            self.lex.next()
            value = self.integer()
            self.lex.expect(")")
            return value
        sign = 1
        if text == "-":
            self.lex.next()
            sign = -1
            kind, text, col = self.lex.peek()
        if kind != "number" or not text.isdigit():
            raise self.lex.error("exponent must be an integer literal", col)
        self.lex.next()
        return sign * int(text)

    def atom(self) -> Expr:
        kind, text, col = self.lex.next()
        if kind == "number":
            return Const(Fraction(text))
        if kind == "op" and text == "(":
            inner = self.expr()
            self.lex.expect(")")
            return inner
        if kind == "ident":
            if text == "t":
                return T
            if text == "der":
                return self.derivative()
            if text in FUNCTIONS:
                self.lex.expect("(")
                arg = self.expr()
                self.lex.expect(")")
                return func(text, arg)
            return self.symbol(text, 0, col)
        found = "end of line" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {found}", self.lex.line, col)

    def derivative(self) -> Expr:
        self.lex.expect("(")
        kind, name, col = self.lex.next()
        if kind != "ident" or name in RESERVED:
            raise ParseError("der() expects a variable name", self.lex.line, col)
        self.lex.expect(",")
        kind, order, ocol = self.lex.next()
        if kind != "number" or not order.isdigit():
            raise ParseError("derivative order must be a non-negative integer", self.lex.line, ocol)
        self.lex.expect(")")
        return self.symbol(name, int(order), col)

    def symbol(self, name: str, order: int, col: int) -> Expr:
        if name in self.variables:
            return Var(name, order)
        if name in self.drivers:
            return Driver(name, order)
        if self.allow_any:
            return Var(name, order)
        raise UndeclaredIdentifier(f"undeclared identifier {name!r}", self.lex.line, col)


def _product(factors: list) -> Expr:
    return mul(*factors) if len(factors) > 1 else factors[0]


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0]


def _parse_names(lexer: _Lexer, seen: dict) -> list[str]:
    names = []
    while True:
        kind, name, col = lexer.next()
        if kind != "ident":
            raise ParseError("expected an identifier", lexer.line, col)
        if name in RESERVED:
            raise ParseError(f"{name!r} is reserved", lexer.line, col)
        if name in seen:
            raise ParseError(f"{name!r} already declared on line {seen[name]}", lexer.line, col)
        seen[name] = lexer.line
        names.append(name)
        kind, text, col = lexer.next()
        if kind == "end":
            return names
        if text != ",":
            raise ParseError(f"expected ',' found {text!r}", lexer.line, col)


def parse_model(text: str) -> Model:
    """Parse model-language source.

    Each equation ``lhs = rhs`` is stored as ``lhs - rhs``.  A non-square
    system is accepted here and only logged; the analysis entry points reject
    it.
    """
    name = None
    variables: list[str] = []
    drivers: list[str] = []
    declared: dict[str, int] = {}
    eq_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        stripped = line.lstrip()
        if not stripped:
            continue
        keyword = stripped.split(None, 1)[0]
        offset = len(line) - len(stripped) + len(keyword)
        rest = stripped[len(keyword):]
        if keyword == "model":
            if name is not None:
                raise ParseError("second 'model' line", lineno, 1)
            lexer = _Lexer(rest, lineno, offset)
            kind, value, col = lexer.next()
            if kind != "ident" or lexer.peek()[0] != "end":
                raise ParseError("expected 'model <name>'", lineno, col)
            name = value
        elif keyword == "var":
            variables += _parse_names(_Lexer(rest, lineno, offset), declared)
        elif keyword == "input":
            drivers += _parse_names(_Lexer(rest, lineno, offset), declared)
        elif keyword == "eq":
            eq_lines.append((lineno, rest, offset))
        else:
            raise ParseError(f"unknown statement {keyword!r}", lineno, len(line) - len(stripped) + 1)
    if name is None:
        raise ParseError("missing 'model <name>' line", 1, 1)

    equations = []
    for lineno, rest, offset in eq_lines:
        lexer = _Lexer(rest, lineno, offset)
        parser = _ExprParser(lexer, variables, drivers)
        lhs = parser.expr()
        lexer.expect("=")
        rhs = parser.expr()
        kind, value, col = lexer.peek()
        if kind != "end":
            raise ParseError(f"unexpected {value!r} after equation", lineno, col)
        equations.append(sub(lhs, rhs))

    model = Model(name, tuple(variables), tuple(drivers), tuple(equations))
    if not model.is_square:
        log.warning(
            "model %s is not square: %d equations, %d variables",
            name,
            len(equations),
            len(variables),
        )
    return model


def parse_expr(text: str, variables: Iterable[str] = (), drivers: Iterable[str] = (), allow_any: bool = False) -> Expr:
    """Parse a single expression.  With ``allow_any`` unknown names become
    variables instead of raising."""
    lexer = _Lexer(text, 1, 0)
    parser = _ExprParser(lexer, variables, drivers, allow_any=allow_any)
    e = parser.expr()
    kind, value, col = lexer.peek()
    if kind != "end":
        raise ParseError(f"unexpected {value!r}", 1, col)
    return e


def parse_symbol(text: str, model: Model) -> Expr:
    """Parse ``x`` or ``der(x, k)`` naming a variable or driver of ``model``."""
    e = parse_expr(text, model.variables, model.drivers)
    if not isinstance(e, (Var, Driver)):
        raise ParseError(f"{text!r} is not a symbol", 1, 1)
    return e


def print_model(model: Model) -> str:
    lines = [f"model {model.name}", "var " + ", ".join(model.variables)]
    if model.drivers:
        lines.append("input " + ", ".join(model.drivers))
    for eq in model.equations:
        lines.append(f"eq {to_text(eq)} = 0")
    return "\n".join(lines) + "\n"

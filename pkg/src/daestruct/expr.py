"""Symbolic expressions over ``t``, dependent variables, and driving inputs.

Nodes are hash-consed: building the same structure twice returns the same
object, so equality is identity and shared subterms stay shared.  Repeated
differentiation therefore produces a DAG whose size grows polynomially with
the derivative order, even though the equivalent tree would be exponential.
Every traversal below walks the DAG once, with an explicit stack.
"""

from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Mapping, Union

from .errors import DomainError, MissingAssignment

Number = Union[int, Fraction]

_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()
_lock = threading.Lock()

FUNCTIONS = ("sin", "cos", "exp", "ln")


def _intern(cls, key: tuple, **attrs):
    full_key = (cls, key)
    with _lock:
        # Reading the underlying dict skips WeakValueDictionary.get overhead.
        ref = _table.data.get(full_key)
        node = ref() if ref is not None else None
        if node is None:
            node = object.__new__(cls)
            for name, value in attrs.items():
                object.__setattr__(node, name, value)
            _table[full_key] = node
    return node


class Expr:
    """Base class of all expression nodes.  Build nodes with the lowercase
    constructors (:func:`add`, :func:`mul`, ...) to get minimal simplification.
    """

    __slots__ = ("__weakref__",)
    args: tuple = ()
    precedence = 5

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __repr__(self):
        return f"{type(self).__name__}({to_text(self)!r})"

    def __str__(self):
        return to_text(self)

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: int):
        return power(self, exponent)


class Const(Expr):
    __slots__ = ("value",)

    def __new__(cls, value: Number):
        if type(value) is int and -64 <= value <= 64:
            cached = _SMALL.get(value)
            if cached is not None:
                return cached
        if type(value) is not int:
            value = Fraction(value)
            if value.denominator == 1:
                value = value.numerator
        return _intern(cls, (value,), value=value)


_SMALL: dict = {}


class Time(Expr):
    __slots__ = ()

    def __new__(cls):
        return _intern(cls, ())


class Var(Expr):
    """Derivative ``order`` of the dependent variable ``name``."""

    __slots__ = ("name", "order")

    def __new__(cls, name: str, order: int = 0):
        if order < 0:
            raise ValueError(f"negative derivative order {order}")
        return _intern(cls, (name, order), name=name, order=int(order))


class Driver(Expr):
    """Derivative ``order`` of the prescribed input function ``name(t)``."""

    __slots__ = ("name", "order")

    def __new__(cls, name: str, order: int = 0):
        if order < 0:
            raise ValueError(f"negative derivative order {order}")
        return _intern(cls, (name, order), name=name, order=int(order))


class Add(Expr):
    __slots__ = ("args",)
    precedence = 1

    def __new__(cls, *terms: Expr):
        return _intern(cls, terms, args=terms)


class Mul(Expr):
    __slots__ = ("args",)
    precedence = 2

    def __new__(cls, *factors: Expr):
        return _intern(cls, factors, args=factors)


class Div(Expr):
    __slots__ = ("args",)
    precedence = 2

    def __new__(cls, num: Expr, den: Expr):
        return _intern(cls, (num, den), args=(num, den))

    @property
    def num(self) -> Expr:
        return self.args[0]

    @property
    def den(self) -> Expr:
        return self.args[1]


class Pow(Expr):
    __slots__ = ("args", "exponent")
    precedence = 4

    def __new__(cls, base: Expr, exponent: int):
        if int(exponent) != exponent:
            raise ValueError(f"non-integer exponent {exponent}")
        return _intern(cls, (base, int(exponent)), args=(base,), exponent=int(exponent))

    @property
    def base(self) -> Expr:
        return self.args[0]


class Neg(Expr):
    __slots__ = ("args",)
    precedence = 3

    def __new__(cls, arg: Expr):
        return _intern(cls, (arg,), args=(arg,))


class Func(Expr):
    __slots__ = ("args", "name")

    def __new__(cls, name: str, arg: Expr):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        return _intern(cls, (name, arg), args=(arg,), name=name)


_SMALL.update((v, Const(v)) for v in range(-64, 65))
ZERO = Const(0)
ONE = Const(1)
T = Time()


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction)):
        return Const(value)
    if isinstance(value, float):
        return Const(Fraction(value).limit_denominator(10**12))
    raise TypeError(f"cannot convert {value!r} to an expression")


def is_const(e: Expr, value=None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# -- simplifying constructors -------------------------------------------------


def add(*terms: Expr) -> Expr:
    """Sum with literal zeros dropped and constant terms folded into one
    trailing constant.  Nested sums are kept as they are so that shared
    subterms survive."""
    kept = []
    constant = 0
    n_const = 0
    for term in terms:
        if isinstance(term, Const):
            constant += term.value
            n_const += 1
        else:
            kept.append(term)
    if constant != 0:
        kept.append(Const(constant))
    elif not kept and n_const:
        return ZERO
    if not kept:
        return ZERO
    if len(kept) == 1:
        return kept[0]
    return Add(*kept)


def mul(*factors: Expr) -> Expr:
    """Product with literal ones dropped, a literal zero absorbing, and
    constant factors folded into one leading constant."""
    kept = []
    constant = 1
    for factor in factors:
        if isinstance(factor, Const):
            if factor.value == 0:
                return ZERO
            constant *= factor.value
        else:
            kept.append(factor)
    if constant != 1 or not kept:
        kept.insert(0, Const(constant))
    if len(kept) == 1:
        return kept[0]
    return Mul(*kept)


def div(num: Expr, den: Expr) -> Expr:
    if is_const(den, 1):
        return num
    if is_const(num, 0) and not is_const(den, 0):
        return ZERO
    if isinstance(num, Const) and isinstance(den, Const) and den.value != 0:
        return Const(Fraction(num.value) / den.value)
    return Div(num, den)


def neg(arg: Expr) -> Expr:
    if isinstance(arg, Const):
        return Const(-arg.value)
    if isinstance(arg, Neg):
        return arg.args[0]
    return Neg(arg)


def sub(a: Expr, b: Expr) -> Expr:
    if is_const(b, 0):
        return a
    return add(a, neg(b))


def power(base: Expr, exponent: int) -> Expr:
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const) and (base.value != 0 or exponent > 0):
        return Const(Fraction(base.value) ** exponent)
    return Pow(base, exponent)


def func(name: str, arg: Expr) -> Expr:
    return Func(name, arg)


def var(name: str, order: int = 0) -> Var:
    return Var(name, order)


def driver(name: str, order: int = 0) -> Driver:
    return Driver(name, order)


# -- traversal ----------------------------------------------------------------


def postorder(root: Expr) -> Iterator[Expr]:
    """Yield every distinct node of the DAG once, children before parents."""
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if node in seen:
            continue
        if expanded or not node.args:
            seen.add(node)
            yield node
            continue
        stack.append((node, True))
        for child in reversed(node.args):
            if child not in seen:
                stack.append((child, False))


def symbols(e: Expr) -> set:
    """All :class:`Var` and :class:`Driver` nodes occurring in ``e``."""
    return {node for node in postorder(e) if isinstance(node, (Var, Driver))}


def variable_orders(e: Expr) -> dict[str, int]:
    """Highest syntactic derivative order of each dependent variable in ``e``."""
    orders: dict[str, int] = {}
    for node in postorder(e):
        if isinstance(node, Var) and node.order >= orders.get(node.name, -1):
            orders[node.name] = node.order
    return orders


def dag_size(e: Expr) -> int:
    return sum(1 for _ in postorder(e))


def _transform(e: Expr, rule: Callable[[Expr, list], Expr], memo: dict) -> Expr:
    # ``rule(node, results_of_children)`` is applied bottom-up over the DAG;
    # subgraphs already present in ``memo`` are not revisited.
    stack = [(e, False)]
    while stack:
        node, expanded = stack.pop()
        if node in memo:
            continue
        if expanded or not node.args:
            memo[node] = rule(node, [memo[c] for c in node.args])
            continue
        stack.append((node, True))
        for child in reversed(node.args):
            if child not in memo:
                stack.append((child, False))
    return memo[e]


# -- differentiation ----------------------------------------------------------


def _split_coefficient(e: Expr) -> tuple[Number, tuple]:
    # A term is coefficient * product of the factors in the returned tuple.
    if isinstance(e, Mul):
        if isinstance(e.args[0], Const):
            return e.args[0].value, e.args[1:]
        return 1, e.args
    return 1, (e,)


def collect(*terms) -> Expr:
    """Sum that flattens nested sums and merges terms differing only in a
    constant coefficient.

    Derivatives are built with this instead of :func:`add`; without it the
    n-th derivative of a product carries 2**n unmerged Leibniz terms.  A term
    may also be given pre-split as ``(coefficient, factors)``, which saves
    building a product node that would be taken apart again.
    """
    coeffs: dict[tuple, Number] = {}
    originals: dict[tuple, tuple] = {}
    constant = 0
    stack = [(t, 1) for t in reversed(terms)]
    while stack:
        e, c = stack.pop()
        if type(e) is tuple:
            k, core = e
            if not core:
                constant += c * k
                continue
            e = None
        elif isinstance(e, Const):
            constant += c * e.value
            continue
        elif isinstance(e, Add):
            stack.extend((t, c) for t in reversed(e.args))
            continue
        elif isinstance(e, Neg):
            stack.append((e.args[0], -c))
            continue
        else:
            k, core = _split_coefficient(e)
        ck = c * k
        if core in coeffs:
            coeffs[core] += ck
        else:
            coeffs[core] = ck
            originals[core] = (e, ck)
    out = []
    for core, c in coeffs.items():
        if c == 0:
            continue
        term, first = originals[core]
        if term is not None and c == first == 1:
            out.append(term)
        elif term is not None and first == 1 and c == -1:
            out.append(neg(term))
        elif c == 1:
            out.append(core[0] if len(core) == 1 else Mul(*core))
        elif c == -1:
            out.append(neg(core[0] if len(core) == 1 else Mul(*core)))
        else:
            out.append(Mul(Const(c), *core))
    if constant:
        return add(*out, Const(constant))
    return out[0] if len(out) == 1 else add(*out)


def _as_product(e: Expr) -> tuple:
    # (coefficient, factors) with no constant, negation or nested product
    # among the factors.
    k = 1
    if isinstance(e, Neg):
        e = e.args[0]
        k = -1
    if isinstance(e, Const):
        return k * e.value, ()
    if isinstance(e, Mul):
        c, core = _split_coefficient(e)
        return k * c, core
    return k, (e,)


def _differentiate(node: Expr, dargs: list, leaf: Callable[[Expr], Expr]) -> Expr:
    # Chain rule shared by the total and partial derivative.
    if not node.args:
        return leaf(node)
    if isinstance(node, Add):
        return collect(*dargs)
    if isinstance(node, Neg):
        return neg(dargs[0])
    if isinstance(node, Mul):
        k, factors = _split_coefficient(node)
        offset = len(node.args) - len(factors)
        terms = []
        for i, f in enumerate(factors):
            df = dargs[i + offset]
            if is_const(df, 0):
                continue
            kd, core = _as_product(df)
            terms.append((k * kd, factors[:i] + core + factors[i + 1 :]))
        return collect(*terms)
    if isinstance(node, Div):
        dnum, dden = dargs
        if is_const(dden, 0):
            return div(dnum, node.den)
        # (a/b)' = (a' - (a/b) b') / b keeps the denominator from squaring on
        # every further differentiation.
        kd, core = _as_product(dden)
        return div(collect(dnum, (-kd, (node,) + core)), node.den)
    if isinstance(node, Pow):
        (dbase,) = dargs
        if is_const(dbase, 0):
            return ZERO
        return mul(Const(node.exponent), power(node.base, node.exponent - 1), dbase)
    if isinstance(node, Func):
        (du,) = dargs
        if is_const(du, 0):
            return ZERO
        u = node.args[0]
        if node.name == "sin":
            return mul(func("cos", u), du)
        if node.name == "cos":
            return neg(mul(func("sin", u), du))
        if node.name == "exp":
            return mul(node, du)
        return div(du, u)
    raise TypeError(f"unknown node {node!r}")


def _time_leaf(node: Expr) -> Expr:
    if isinstance(node, Var):
        return Var(node.name, node.order + 1)
    if isinstance(node, Driver):
        return Driver(node.name, node.order + 1)
    if isinstance(node, Time):
        return ONE
    return ZERO


def total_derivative(e: Expr, memo: dict | None = None) -> Expr:
    """d e / dt by the chain rule.

    Pass the same ``memo`` dict across repeated calls on successive
    derivatives of one expression to reuse already differentiated subterms.
    """
    if memo is None:
        memo = {}
    return _transform(e, lambda node, dargs: _differentiate(node, dargs, _time_leaf), memo)


def partial_derivative(e: Expr, target, memo: dict | None = None) -> Expr:
    """Partial derivative of ``e`` with respect to one derivative symbol.

    ``target`` is a :class:`Var` or a ``(name, order)`` pair; every distinct
    (variable, order) pair is an independent symbol.
    """
    if not isinstance(target, Var):
        target = Var(*target)

    def leaf(node):
        return ONE if node is target else ZERO

    if memo is None:
        memo = {}
    return _transform(e, lambda node, dargs: _differentiate(node, dargs, leaf), memo)


def substitute(e: Expr, mapping: Mapping[Expr, Expr]) -> Expr:
    """Replace leaf symbols by expressions, rebuilding with the simplifying
    constructors."""

    def rule(node, new_args):
        if not node.args:
            return mapping.get(node, node)
        return _rebuild_node(node, new_args)

    return _transform(e, rule, {})


def _rebuild_node(node: Expr, args: list) -> Expr:
    if isinstance(node, Add):
        return add(*args)
    if isinstance(node, Mul):
        return mul(*args)
    if isinstance(node, Div):
        return div(*args)
    if isinstance(node, Neg):
        return neg(args[0])
    if isinstance(node, Pow):
        return power(args[0], node.exponent)
    if isinstance(node, Func):
        return func(node.name, args[0])
    raise TypeError(f"unknown node {node!r}")


def expand(e: Expr) -> Expr:
    """Distribute products over sums and push negations into sums.

    Denominators and function arguments are expanded but not combined;
    this is not a canonical form."""

    def terms_of(x):
        if isinstance(x, Add):
            return list(x.args)
        return [x]

    def rule(node, args):
        if isinstance(node, Neg):
            inner = args[0]
            if isinstance(inner, Add):
                return add(*(neg(t) for t in inner.args))
            return neg(inner)
        if isinstance(node, Mul):
            products = [[]]
            for factor in args:
                products = [p + [t] for p in products for t in terms_of(factor)]
            return add(*(_signed_mul(p) for p in products))
        if not node.args:
            return node
        return _rebuild_node(node, args)

    return _transform(e, rule, {})


def _signed_mul(factors: list) -> Expr:
    negative = False
    plain = []
    for f in factors:
        if isinstance(f, Neg):
            negative = not negative
            plain.append(f.args[0])
        else:
            plain.append(f)
    product = mul(*plain)
    return neg(product) if negative else product


# -- numeric evaluation ---------------------------------------------------------


@dataclass(frozen=True)
class Point:
    """Numeric values for ``t`` and for derivative symbols of variables and
    drivers."""

    t: float = 0.0
    values: Mapping[Expr, float] = field(default_factory=dict)

    def __getitem__(self, symbol: Expr) -> float:
        return self.values[symbol]

    def __contains__(self, symbol: Expr) -> bool:
        return symbol in self.values

    def updated(self, values: Mapping[Expr, float]) -> "Point":
        merged = dict(self.values)
        merged.update(values)
        return Point(self.t, merged)


def evaluate(e: Expr, point: Point, memo: dict | None = None) -> float:
    """Evaluate ``e`` in binary floating point at ``point``."""
    if memo is None:
        memo = {}
    return _transform(e, lambda node, vals: _eval_node(node, vals, point), memo)


def _eval_node(node: Expr, vals: list, point: Point) -> float:
    if isinstance(node, Const):
        return float(node.value)
    if isinstance(node, Time):
        return float(point.t)
    if isinstance(node, (Var, Driver)):
        try:
            return float(point.values[node])
        except KeyError:
            raise MissingAssignment(f"no value assigned to {to_text(node)}") from None
    if isinstance(node, Add):
        return math.fsum(vals)
    if isinstance(node, Mul):
        result = 1.0
        for v in vals:
            result *= v
        return result
    if isinstance(node, Neg):
        return -vals[0]
    if isinstance(node, Div):
        if vals[1] == 0.0:
            raise DomainError(f"division by zero in {to_text(node)}")
        return vals[0] / vals[1]
    if isinstance(node, Pow):
        if vals[0] == 0.0 and node.exponent < 0:
            raise DomainError(f"zero raised to a negative power in {to_text(node)}")
        return vals[0] ** node.exponent
    if isinstance(node, Func):
        u = vals[0]
        if node.name == "ln":
            if u <= 0.0:
                raise DomainError(f"ln of non-positive argument {u}")
            return math.log(u)
        return {"sin": math.sin, "cos": math.cos, "exp": math.exp}[node.name](u)
    raise TypeError(f"unknown node {node!r}")


# -- printing -------------------------------------------------------------------


def _const_text(value: Number) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"({value.numerator}/{value.denominator})"


def _symbol_text(name: str, order: int) -> str:
    return name if order == 0 else f"der({name}, {order})"


def to_text(e: Expr) -> str:
    """Render ``e`` in the model language.  Parsing the output rebuilds an
    expression equal to ``e`` whenever ``e`` came from the parser."""
    memo: dict = {}
    for node in postorder(e):
        if node not in memo:
            memo[node] = _node_text(node, memo)
    return memo[e]


def _wrap(child: Expr, memo: dict, min_precedence: int) -> str:
    text = memo[child]
    if child.precedence < min_precedence:
        return f"({text})"
    return text


def _node_text(node: Expr, memo: dict) -> str:
    if isinstance(node, Const):
        return _const_text(node.value)
    if isinstance(node, Time):
        return "t"
    if isinstance(node, (Var, Driver)):
        return _symbol_text(node.name, node.order)
    if isinstance(node, Add):
        first, *rest = node.args
        parts = [_wrap(first, memo, 2)]
        for term in rest:
            if isinstance(term, Neg):
                parts.append(" - " + _wrap(term.args[0], memo, 2))
            elif isinstance(term, Const) and term.value < 0:
                parts.append(" - " + _const_text(-term.value))
            else:
                parts.append(" + " + _wrap(term, memo, 2))
        return "".join(parts)
    if isinstance(node, Mul):
        first, *rest = node.args
        parts = [_wrap(first, memo, 2) if not isinstance(first, Mul) else f"({memo[first]})"]
        for factor in rest:
            parts.append(_wrap(factor, memo, 3))
        return " * ".join(parts)
    if isinstance(node, Div):
        return f"{_wrap(node.num, memo, 2)} / {_wrap(node.den, memo, 3)}"
    if isinstance(node, Neg):
        return "-" + _wrap(node.args[0], memo, 4)
    if isinstance(node, Pow):
        base = node.base
        atomic = not base.args and not (isinstance(base, Const) and (base.value < 0 or base.value.denominator != 1))
        base_text = memo[base] if atomic or isinstance(base, Func) else f"({memo[base]})"
        exponent = str(node.exponent) if node.exponent >= 0 else f"({node.exponent})"
        return f"{base_text}^{exponent}"
    if isinstance(node, Func):
        return f"{node.name}({memo[node.args[0]]})"
    raise TypeError(f"unknown node {node!r}")


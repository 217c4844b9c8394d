"""
Closed-form coefficient functions of the time variable `t`.

Grammar (whitespace insignificant):

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?
    atom  := number | 't' | 'pi' | 'e' | ident '(' expr ')' | '(' expr ')'

`^` binds tighter than unary minus (-t^2 is -(t^2)) and is right-associative.
Parsed trees are kept exactly as written; the arithmetic helpers used to
assemble derived expressions fold identities such as x*1 and x+0.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from app.core.errors import ArityError, DomainViolation, ExprSyntaxError, UnknownIdentifierError

logger = logging.getLogger(__name__)

FUNCTIONS: Dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
    "sinh": math.sinh,
    "cosh": math.cosh,
}

CONSTANTS: Dict[str, float] = {"pi": math.pi, "e": math.e}

Number = Union[int, float]


class Expr:
    """Immutable expression tree node."""

    __slots__ = ()

    def eval(self, t: float) -> float:
        raise NotImplementedError

    def derivative(self) -> "Expr":
        raise NotImplementedError

    @property
    def depends_on_t(self) -> bool:
        raise NotImplementedError

    def is_constant(self) -> bool:
        return not self.depends_on_t

    def __add__(self, other: Union["Expr", Number]) -> "Expr":
        return add(self, as_expr(other))

    def __radd__(self, other: Number) -> "Expr":
        return add(as_expr(other), self)

    def __sub__(self, other: Union["Expr", Number]) -> "Expr":
        return sub(self, as_expr(other))

    def __rsub__(self, other: Number) -> "Expr":
        return sub(as_expr(other), self)

    def __mul__(self, other: Union["Expr", Number]) -> "Expr":
        return mul(self, as_expr(other))

    def __rmul__(self, other: Number) -> "Expr":
        return mul(as_expr(other), self)

    def __truediv__(self, other: Union["Expr", Number]) -> "Expr":
        return div(self, as_expr(other))

    def __rtruediv__(self, other: Number) -> "Expr":
        return div(as_expr(other), self)

    def __pow__(self, other: Union["Expr", Number]) -> "Expr":
        return power(self, as_expr(other))

    def __rpow__(self, other: Number) -> "Expr":
        return power(as_expr(other), self)

    def __neg__(self) -> "Expr":
        return neg(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def eval(self, t: float) -> float:
        return self.value

    def derivative(self) -> Expr:
        return ZERO

    @property
    def depends_on_t(self) -> bool:
        return False

    def __str__(self) -> str:
        return repr(float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    def eval(self, t: float) -> float:
        return float(t)

    def derivative(self) -> Expr:
        return ONE

    @property
    def depends_on_t(self) -> bool:
        return True

    def __str__(self) -> str:
        return "t"


@dataclass(frozen=True)
class NamedConst(Expr):
    name: str

    def eval(self, t: float) -> float:
        return CONSTANTS[self.name]

    def derivative(self) -> Expr:
        return ZERO

    @property
    def depends_on_t(self) -> bool:
        return False

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def eval(self, t: float) -> float:
        return -self.arg.eval(t)

    def derivative(self) -> Expr:
        return neg(self.arg.derivative())

    @property
    def depends_on_t(self) -> bool:
        return self.arg.depends_on_t

    def __str__(self) -> str:
        return f"(-{self.arg})"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def eval(self, t: float) -> float:
        lhs = self.left.eval(t)
        rhs = self.right.eval(t)
        if self.op == "+":
            out = lhs + rhs
        elif self.op == "-":
            out = lhs - rhs
        elif self.op == "*":
            out = lhs * rhs
        elif self.op == "/":
            if rhs == 0.0:
                raise DomainViolation("division by zero", self, t)
            out = lhs / rhs
        else:
            out = _pow(lhs, rhs, self, t)
        if not math.isfinite(out):
            raise DomainViolation("non-finite result", self, t)
        return out

    def derivative(self) -> Expr:
        u, v = self.left, self.right
        du = u.derivative()
        if self.op == "^":
            if not v.depends_on_t:
                return mul(mul(v, power(u, sub(v, ONE))), du)
            dv = v.derivative()
            if not u.depends_on_t:
                return mul(mul(self, call("log", u)), dv)
            return mul(self, add(mul(dv, call("log", u)), div(mul(v, du), u)))
        dv = v.derivative()
        if self.op == "+":
            return add(du, dv)
        if self.op == "-":
            return sub(du, dv)
        if self.op == "*":
            return add(mul(du, v), mul(u, dv))
        return div(sub(mul(du, v), mul(u, dv)), power(v, TWO))

    @property
    def depends_on_t(self) -> bool:
        return self.left.depends_on_t or self.right.depends_on_t

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call(Expr):
    name: str
    arg: Expr

    def eval(self, t: float) -> float:
        u = self.arg.eval(t)
        if self.name == "log" and u <= 0.0:
            raise DomainViolation("log of non-positive value", self, t)
        if self.name == "sqrt" and u < 0.0:
            raise DomainViolation("sqrt of negative value", self, t)
        try:
            out = FUNCTIONS[self.name](u)
        except (OverflowError, ValueError):
            raise DomainViolation(f"{self.name} out of range", self, t) from None
        if not math.isfinite(out):
            raise DomainViolation("non-finite result", self, t)
        return out

    def derivative(self) -> Expr:
        u = self.arg
        du = u.derivative()
        name = self.name
        if name == "sin":
            outer = call("cos", u)
        elif name == "cos":
            outer = neg(call("sin", u))
        elif name == "tan":
            outer = div(ONE, power(call("cos", u), TWO))
        elif name == "exp":
            outer = self
        elif name == "log":
            return div(du, u)
        elif name == "sqrt":
            outer = div(ONE, mul(TWO, self))
        elif name == "tanh":
            outer = sub(ONE, power(self, TWO))
        elif name == "sinh":
            outer = call("cosh", u)
        else:
            outer = call("sinh", u)
        return mul(outer, du)

    @property
    def depends_on_t(self) -> bool:
        return self.arg.depends_on_t

    def __str__(self) -> str:
        return f"{self.name}({self.arg})"


ZERO = Const(0.0)
ONE = Const(1.0)
TWO = Const(2.0)
T = Var()


def _pow(base: float, exponent: float, node: Expr, t: float) -> float:
    if base == 0.0 and exponent < 0.0:
        raise DomainViolation("zero raised to a negative power", node, t)
    if base < 0.0 and not float(exponent).is_integer():
        raise DomainViolation("negative base with non-integer exponent", node, t)
    try:
        return math.pow(base, exponent)
    except (OverflowError, ValueError):
        raise DomainViolation("power out of range", node, t) from None


# ----------------------------
# Folding constructors
# ----------------------------
def _number(e: Expr) -> Optional[float]:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Neg) and isinstance(e.arg, Const):
        return -e.arg.value
    return None


def _lift(value: float) -> Expr:
    value = float(value)
    if value < 0.0:
        return Neg(Const(-value))
    return Const(value + 0.0)


def add(a: Expr, b: Expr) -> Expr:
    na, nb = _number(a), _number(b)
    if na is not None and nb is not None:
        return _lift(na + nb)
    if na == 0.0:
        return b
    if nb == 0.0:
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    na, nb = _number(a), _number(b)
    if na is not None and nb is not None:
        return _lift(na - nb)
    if nb == 0.0:
        return a
    if na == 0.0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    na, nb = _number(a), _number(b)
    if na is not None and nb is not None:
        return _lift(na * nb)
    if na == 0.0 or nb == 0.0:
        return ZERO
    if na == 1.0:
        return b
    if nb == 1.0:
        return a
    if na == -1.0:
        return neg(b)
    if nb == -1.0:
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    na, nb = _number(a), _number(b)
    if nb is not None and nb != 0.0:
        if na is not None:
            return _lift(na / nb)
        if nb == 1.0:
            return a
    if na == 0.0 and nb != 0.0:
        return ZERO
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    nb = _number(b)
    if nb == 0.0:
        return ONE
    if nb == 1.0:
        return a
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    na = _number(a)
    if na is not None:
        return _lift(-na)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(name: str, arg: Union[Expr, Number, str]) -> Expr:
    if name not in FUNCTIONS:
        raise UnknownIdentifierError(f"unknown function '{name}'", 0, name)
    return Call(name, as_expr(arg))


def as_expr(value: Union[Expr, Number, str]) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse_expr(value)
    if isinstance(value, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(value, (int, float, np.floating, np.integer)):
        return _lift(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to an expression")


# ----------------------------
# Tokenizer / parser
# ----------------------------
_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)

Token = Tuple[str, str, int]


def _tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(source, pos)
        if not m or m.end() == pos:
            start = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {source[start]!r}", _byte_offset(source, start), source)
        kind = m.lastgroup or "op"
        text = m.group(kind)
        tokens.append((kind, text, _byte_offset(source, m.start(kind))))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(source, n)))
    return tokens


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def _error(self, message: str, cls=ExprSyntaxError) -> ExprSyntaxError:
        return cls(message, self.tok[2], self.source)

    def _is_op(self, *ops: str) -> bool:
        kind, text, _ = self.tok
        return kind == "op" and text in ops

    def _expect(self, op: str) -> None:
        if not self._is_op(op):
            found = self.tok[1] or "end of input"
            raise self._error(f"expected '{op}', found '{found}'")
        self.i += 1

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok[0] != "end":
            raise self._error(f"unexpected '{self.tok[1]}'")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self._is_op("+", "-"):
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self._is_op("*", "/"):
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self._is_op("-"):
            self.i += 1
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._is_op("^"):
            self.i += 1
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, _ = self.tok
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise self._error(f"numeric literal '{text}' is out of range")
            self.i += 1
            return Const(value)
        if kind == "ident":
            return self._identifier(text)
        if self._is_op("("):
            self.i += 1
            node = self.expr()
            self._expect(")")
            return node
        found = text or "end of input"
        raise self._error(f"unexpected '{found}'")

    def _identifier(self, name: str) -> Expr:
        self.i += 1
        called = self._is_op("(")
        if name == "t" or name in CONSTANTS:
            if called:
                raise self._error(f"'{name}' is not a function", ArityError)
            return T if name == "t" else NamedConst(name)
        if name not in FUNCTIONS:
            self.i -= 1
            raise self._error(f"unknown identifier '{name}'", UnknownIdentifierError)
        if not called:
            raise self._error(f"function '{name}' needs one argument in parentheses", ArityError)
        self.i += 1
        if self._is_op(")"):
            raise self._error(f"function '{name}' takes exactly one argument", ArityError)
        arg = self.expr()
        if self._is_op(","):
            raise self._error(f"function '{name}' takes exactly one argument", ArityError)
        self._expect(")")
        return Call(name, arg)


def parse_expr(source: str) -> Expr:
    if not isinstance(source, str):
        raise TypeError("expression source must be text")
    return _Parser(source).parse()


def eval_expr(e: Expr, t: float) -> float:
    return e.eval(float(t))


def derivative(e: Expr) -> Expr:
    return e.derivative()


def eval_grid(e: Expr, ts: Iterable[float]) -> np.ndarray:
    return np.array([e.eval(float(t)) for t in ts], dtype=float)

"""Scalar expressions in the variables x, t, y.

Coefficients and data functions are written as text in config files and
parsed into small immutable trees.  Trees can be evaluated on scalars or on
numpy arrays (broadcasting), and differentiated symbolically.

Grammar (standard precedence, ``^`` right-associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := number | name | name '(' expr ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

VARIABLES = ("x", "t", "y")
FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        super().__init__(f"{message} at position {position}")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ExprDomainError(ExprError):
    def __init__(self, message: str, subexpression: "Expr"):
        self.subexpression = subexpression
        super().__init__(f"{message} in '{subexpression}'")


# --------------------------------------------------------------------------
# tree nodes
# --------------------------------------------------------------------------

class Expr:
    """Base node.  Subclasses are frozen dataclasses."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)

    def __call__(self, **bindings):
        return evaluate(self, bindings)

    def variables(self) -> frozenset:
        return free_variables(self)


@dataclass(frozen=True, slots=True, repr=False)
class Num(Expr):
    value: float

    def __repr__(self):
        return f"Num({self.value!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Const(Expr):
    name: str

    @property
    def value(self) -> float:
        return CONSTANTS[self.name]

    def __repr__(self):
        return f"Const({self.name!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Neg(Expr):
    arg: Expr

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True, slots=True, repr=False)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __repr__(self):
        return f"BinOp({self.op!r}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Call(Expr):
    func: str
    arg: Expr

    def __repr__(self):
        return f"Call({self.func!r}, {self.arg!r})"


ExprLike = Union[Expr, str, int, float]


def as_expr(value: ExprLike) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Num(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()])"
    r")"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        text = m.group(kind)
        if text == "**":
            text = "^"
        tokens.append((kind, text, start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, tok, pos = self.advance()
        if tok != text:
            what = "end of input" if kind == "end" else repr(tok)
            raise ExprSyntaxError(f"expected {text!r}, found {what}", pos, self.source)

    def parse(self) -> Expr:
        node = self.expr()
        kind, tok, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {tok!r}", pos, self.source)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        kind, tok, _ = self.peek()
        if kind == "op" and tok == "-":
            self.advance()
            return Neg(self.unary())
        if kind == "op" and tok == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, tok, _ = self.peek()
        if kind == "op" and tok == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, tok, pos = self.advance()
        if kind == "num":
            return Num(float(tok))
        if kind == "name":
            if tok in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok, arg)
            if tok in VARIABLES:
                return Var(tok)
            if tok in CONSTANTS:
                return Const(tok)
            raise UnknownIdentifierError(f"unknown identifier {tok!r}", pos, self.source)
        if kind == "op" and tok == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(tok)
        raise ExprSyntaxError(f"unexpected {what}", pos, self.source)


def parse(source: str) -> Expr:
    """Parse expression text into a tree.

    Raises ExprSyntaxError (with ``position``) on malformed input and
    UnknownIdentifierError for names outside the grammar.
    """
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source if isinstance(source, str) else "")
    return _Parser(source).parse()


# --------------------------------------------------------------------------
# printing
# --------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    if isinstance(node, Num) and node.value < 0:
        return _PREC["neg"]
    return 5


def to_string(node: Expr) -> str:
    """Render with the minimal parentheses that re-parse to the same tree."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Neg):
        inner = to_string(node.arg)
        # '-' applies to a following unary, so anything tighter than neg needs no parens
        if _prec(node.arg) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left = to_string(node.left)
        right = to_string(node.right)
        if node.op == "^":
            # base must be an atom; exponent is a unary so Neg and ^ are fine
            if _prec(node.left) <= p:
                left = f"({left})"
            if _prec(node.right) < _PREC["neg"]:
                right = f"({right})"
            return f"{left}^{right}"
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def free_variables(node: Expr) -> frozenset:
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, Neg):
        return free_variables(node.arg)
    if isinstance(node, Call):
        return free_variables(node.arg)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    return frozenset()


def _all_finite(v) -> bool:
    return bool(np.all(np.isfinite(v)))


def evaluate(node: Expr, bindings=None, **kwargs):
    """Evaluate ``node`` with variable values from ``bindings``.

    Values may be floats or numpy arrays; arrays broadcast against each
    other.  A scalar result is returned as ``float``.  Domain violations
    raise ExprDomainError naming the offending subexpression.
    """
    env = dict(bindings or {})
    env.update(kwargs)
    with np.errstate(all="ignore"):
        out = _eval(node, env)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _eval(node: Expr, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise ExprError(f"variable {node.name!r} is not bound") from None
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Call):
        a = _eval(node.arg, env)
        if node.func == "log":
            if np.any(np.asarray(a) <= 0):
                raise ExprDomainError("log of non-positive value", node)
            return np.log(a)
        if node.func == "sqrt":
            if np.any(np.asarray(a) < 0):
                raise ExprDomainError("sqrt of negative value", node)
            return np.sqrt(a)
        if node.func == "exp":
            r = np.exp(a)
            if not _all_finite(r):
                raise ExprDomainError("overflow", node)
            return r
        return np.sin(a) if node.func == "sin" else np.cos(a)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprDomainError("division by zero", node)
            return a / b
        # power
        r = np.power(np.asarray(a, dtype=float), b)
        if not _all_finite(r):
            raise ExprDomainError("invalid or non-finite power", node)
        return r
    raise TypeError(f"not an expression node: {node!r}")


def substitute(node: Expr, var: str, value: ExprLike) -> Expr:
    """Replace every occurrence of ``var`` by ``value``."""
    value = as_expr(value)

    def sub(n):
        if isinstance(n, Var):
            return value if n.name == var else n
        if isinstance(n, Neg):
            return Neg(sub(n.arg))
        if isinstance(n, Call):
            return Call(n.func, sub(n.arg))
        if isinstance(n, BinOp):
            return BinOp(n.op, sub(n.left), sub(n.right))
        return n

    return sub(node)


# --------------------------------------------------------------------------
# differentiation
# --------------------------------------------------------------------------
# The constructors below fold literal zeros and ones so that repeated
# differentiation does not blow up the tree.  They are not a simplifier.

ZERO = Num(0.0)
ONE = Num(1.0)


def _is_num(n, v=None):
    return isinstance(n, Num) and (v is None or n.value == v)


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0):
        return ZERO
    if _is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def _neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(a, b):
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def _d1(node: Expr, var: str) -> Expr:
    if isinstance(node, (Num, Const)):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if var not in free_variables(node):
        return ZERO
    if isinstance(node, Neg):
        return _neg(_d1(node.arg, var))
    if isinstance(node, Call):
        u = node.arg
        du = _d1(u, var)
        if node.func == "sin":
            outer = Call("cos", u)
        elif node.func == "cos":
            outer = _neg(Call("sin", u))
        elif node.func == "exp":
            outer = node
        elif node.func == "log":
            return _div(du, u)
        else:  # sqrt
            return _div(du, _mul(Num(2.0), node))
        return _mul(outer, du)
    if isinstance(node, BinOp):
        u, v = node.left, node.right
        if node.op == "+":
            return _add(_d1(u, var), _d1(v, var))
        if node.op == "-":
            return _sub(_d1(u, var), _d1(v, var))
        if node.op == "*":
            return _add(_mul(_d1(u, var), v), _mul(u, _d1(v, var)))
        if node.op == "/":
            du, dv = _d1(u, var), _d1(v, var)
            if _is_num(dv, 0.0):
                return _div(du, v)
            return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, Num(2.0)))
        # power
        du = _d1(u, var)
        if var not in free_variables(v):
            if _is_num(v):
                expo = Num(v.value - 1.0)
            else:
                expo = _sub(v, ONE)
            return _mul(_mul(v, _pow(u, expo)), du)
        dv = _d1(v, var)
        return _mul(node, _add(_mul(dv, Call("log", u)), _div(_mul(v, du), u)))
    raise TypeError(f"not an expression node: {node!r}")


def differentiate(node: ExprLike, var: str, order: int = 1) -> Expr:
    """Exact derivative of ``node`` of the given order in ``var`` (order 0 is the identity)."""
    if var not in VARIABLES:
        raise ValueError(f"unknown variable {var!r}")
    if int(order) != order or order < 0:
        raise ValueError("derivative order must be a nonnegative integer")
    result = as_expr(node)
    for _ in range(int(order)):
        result = _d1(result, var)
    return result


def mixed_derivative(node: ExprLike, orders: dict) -> Expr:
    """Apply derivatives for several variables, e.g. ``{"x": 2, "t": 2}``."""
    result = as_expr(node)
    for var, k in orders.items():
        if k:
            result = differentiate(result, var, k)
    return result


# helpers for building trees in code without going through text

def add(*terms: ExprLike) -> Expr:
    out = ZERO
    for term in terms:
        out = _add(out, as_expr(term))
    return out


def mul(*factors: ExprLike) -> Expr:
    out = ONE
    for factor in factors:
        out = _mul(out, as_expr(factor))
    return out


def sub(a: ExprLike, b: ExprLike) -> Expr:
    return _sub(as_expr(a), as_expr(b))


def neg(a: ExprLike) -> Expr:
    return _neg(as_expr(a))

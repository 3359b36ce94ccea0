"""Small expression language for scalar fields in the coordinates (x, y, t).

Metric components, prescribed curvature, boundary data and test functions are
all written as infix text such as ``"1 + 0.1*sin(x*t)"``.  Expressions are
parsed into an immutable tree that can be evaluated on numpy arrays and
differentiated symbolically.

Grammar (usual precedence, ``^`` binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # exponent must fold to a constant
    atom   := number | name | func '(' expr ')' | '(' expr ')'

Names are the variables ``x``, ``y``, ``t`` and the constants ``pi`` and ``e``.
Functions are ``sin``, ``cos``, ``exp``, ``log`` and ``sqrt``.  ``**`` is
accepted as a synonym for ``^``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "ExprSyntaxError",
    "DomainError",
    "parse",
    "differentiate",
    "ScalarField",
    "evaluate",
    "as_field",
    "substitute",
]

VARIABLES = ("x", "y", "t")
FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
CONSTANTS = {"pi": math.pi, "e": math.e}

# binding strength used by the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class DomainError(ArithmeticError):
    """Evaluation left the domain of an operation (division by zero, log(0), ...)."""


class Expression:
    """Base class of expression nodes.  Nodes are immutable and hashable."""

    def evaluate(self, x=0.0, y=0.0, t=0.0):
        env = {"x": x, "y": y, "t": t}
        with np.errstate(all="ignore"):
            value = self._eval(env)
        return value

    def _eval(self, env):
        raise NotImplementedError

    def diff(self, var):
        return differentiate(self, var)

    def __str__(self):
        return _format(self)


@dataclass(frozen=True)
class Const(Expression):
    value: float

    def _eval(self, env):
        return self.value


@dataclass(frozen=True)
class Var(Expression):
    name: str

    def _eval(self, env):
        return env[self.name]


@dataclass(frozen=True)
class Unary(Expression):
    op: str
    arg: Expression

    def _eval(self, env):
        a = self.arg._eval(env)
        op = self.op
        if op == "neg":
            return -a
        if op == "sin":
            return np.sin(a)
        if op == "cos":
            return np.cos(a)
        if op == "exp":
            return np.exp(a)
        if op == "log":
            if np.any(np.asarray(a) <= 0):
                raise DomainError("log of non-positive value")
            return np.log(a)
        if op == "sqrt":
            if np.any(np.asarray(a) < 0):
                raise DomainError("sqrt of negative value")
            return np.sqrt(a)
        raise ValueError(f"unknown unary operator {op!r}")


@dataclass(frozen=True)
class Binary(Expression):
    op: str
    left: Expression
    right: Expression

    def _eval(self, env):
        a = self.left._eval(env)
        b = self.right._eval(env)
        op = self.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(np.asarray(b) == 0):
                raise DomainError("division by zero")
            return a / b
        if op == "^":
            n = self.right.value
            base = np.asarray(a)
            if float(n).is_integer():
                if n < 0 and np.any(base == 0):
                    raise DomainError("zero raised to a negative power")
                return a ** int(n) if n >= 0 else 1.0 / a ** int(-n)
            if np.any(base < 0):
                raise DomainError("negative base with non-integer exponent")
            if n < 0 and np.any(base == 0):
                raise DomainError("zero raised to a negative power")
            return np.power(a, n)
        raise ValueError(f"unknown binary operator {op!r}")


# ---------------------------------------------------------------------------
# constructors with constant folding


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def _try_fold(node):
    try:
        with np.errstate(all="ignore"):
            v = node._eval({})
    except (DomainError, ZeroDivisionError, OverflowError):
        return node
    v = float(v)
    return Const(v) if math.isfinite(v) else node


def neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return _try_fold(Binary("+", a, b))
    return Binary("+", a, b)


def sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return _try_fold(Binary("-", a, b))
    return Binary("-", a, b)


def mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return _try_fold(Binary("*", a, b))
    return Binary("*", a, b)


def div(a, b):
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a) and _is_const(b):
        return _try_fold(Binary("/", a, b))
    return Binary("/", a, b)


def power(a, n):
    if n == 0.0:
        return Const(1.0)
    if n == 1.0:
        return a
    if _is_const(a):
        return _try_fold(Binary("^", a, Const(n)))
    return Binary("^", a, Const(n))


def func(name, a):
    node = Unary(name, a)
    return _try_fold(node) if _is_const(a) else node


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        value = m.group(kind)
        if kind == "op" and value == "**":
            value = "^"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, v, pos = self.tok
        if v != value or kind != "op":
            what = "end of input" if kind == "end" else repr(v)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", pos)
        self.take()

    def parse(self):
        node = self.expr()
        kind, v, pos = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {v!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.take()[1]
            arg = self.unary()
            return neg(arg) if op == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            pos = self.take()[2]
            exponent = self.unary()
            if not isinstance(exponent, Const):
                raise ExprSyntaxError("exponent must be a constant", pos + 1)
            return power(base, exponent.value)
        return base

    def atom(self):
        kind, v, pos = self.tok
        if kind == "num":
            self.take()
            return Const(float(v))
        if kind == "name":
            self.take()
            if v in VARIABLES:
                return Var(v)
            if v in CONSTANTS:
                return Const(CONSTANTS[v])
            if v in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return func(v, arg)
            raise ExprSyntaxError(f"unknown identifier {v!r}", pos)
        if kind == "op" and v == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(v)
        raise ExprSyntaxError(f"unexpected {what}", pos)


def parse(text: str) -> Expression:
    """Parse ``text`` into an expression tree.

    Raises :class:`ExprSyntaxError` carrying the byte offset of the first
    offending token (for ``"x +"`` that is offset 3, the end of input).
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printer


def _format_number(v):
    if float(v).is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def _prec(e):
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    if isinstance(e, Const) and e.value < 0:
        return _PREC["neg"]
    return 5


def _format(e):
    if isinstance(e, Const):
        return _format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = _format(e.arg)
            return f"-({inner})" if _prec(e.arg) < _PREC["^"] else f"-{inner}"
        return f"{e.op}({_format(e.arg)})"
    op = e.op
    p = _PREC[op]
    left, right = _format(e.left), _format(e.right)
    if op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        return f"{left}^{_format_exponent(e.right.value)}"
    if _prec(e.left) < p:
        left = f"({left})"
    # left-associative: an equal-precedence right operand needs parentheses
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"


def _format_exponent(v):
    s = _format_number(v)
    return f"({s})" if v < 0 else s


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Expression, var: str) -> Expression:
    """Exact partial derivative of ``e`` with respect to ``var``."""
    if var not in VARIABLES:
        raise ValueError(f"unknown variable {var!r}")
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == var else 0.0)
    if isinstance(e, Unary):
        a = e.arg
        da = differentiate(a, var)
        if _is_const(da, 0.0):
            return Const(0.0)
        if e.op == "neg":
            return neg(da)
        if e.op == "sin":
            return mul(func("cos", a), da)
        if e.op == "cos":
            return neg(mul(func("sin", a), da))
        if e.op == "exp":
            return mul(e, da)
        if e.op == "log":
            return div(da, a)
        if e.op == "sqrt":
            return div(da, mul(Const(2.0), e))
        raise ValueError(e.op)
    a, b = e.left, e.right
    da = differentiate(a, var)
    if e.op == "^":
        n = b.value
        return mul(mul(Const(n), power(a, n - 1.0)), da)
    db = differentiate(b, var)
    if e.op == "+":
        return add(da, db)
    if e.op == "-":
        return sub(da, db)
    if e.op == "*":
        return add(mul(da, b), mul(a, db))
    if e.op == "/":
        if _is_const(db, 0.0):
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, 2.0))
    raise ValueError(e.op)


# ---------------------------------------------------------------------------
# scalar fields

Number = Union[float, int]


@dataclass(frozen=True)
class ScalarField:
    """An expression together with its symbolic gradient in (x, y, t).

    Calling the field evaluates it; arrays broadcast and the result always
    has the broadcast shape of the arguments.  Non-finite results raise
    :class:`DomainError`.
    """

    expression: Expression
    gradient: tuple = field(default=None, compare=False)

    def __post_init__(self):
        if self.gradient is None:
            grad = tuple(differentiate(self.expression, v) for v in VARIABLES)
            object.__setattr__(self, "gradient", grad)

    @classmethod
    def parse(cls, text):
        return cls(parse(text))

    @classmethod
    def constant(cls, value):
        return cls(Const(float(value)))

    @property
    def is_constant(self):
        return isinstance(self.expression, Const)

    @property
    def value(self):
        """The constant value, or ``None`` for a non-constant field."""
        return self.expression.value if self.is_constant else None

    def __call__(self, x, y, t):
        return _eval_checked(self.expression, x, y, t)

    def grad(self, x, y, t):
        """Partials stacked on a trailing axis of length 3."""
        parts = [_eval_checked(g, x, y, t) for g in self.gradient]
        return np.stack(parts, axis=-1)

    def partial(self, var):
        return ScalarField(self.gradient[VARIABLES.index(var)])

    def __str__(self):
        return str(self.expression)


def _eval_checked(e, x, y, t):
    x, y, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, t)))
    value = e.evaluate(x, y, t)
    value = np.array(np.broadcast_to(value, x.shape), dtype=float)
    if not np.all(np.isfinite(value)):
        raise DomainError(f"non-finite value of {e}")
    return value if value.ndim else float(value)


def as_field(value) -> ScalarField:
    """Coerce text, numbers or expressions into a :class:`ScalarField`."""
    if isinstance(value, ScalarField):
        return value
    if isinstance(value, Expression):
        return ScalarField(value)
    if isinstance(value, str):
        return ScalarField.parse(value)
    if isinstance(value, (int, float, np.floating, np.integer)):
        return ScalarField.constant(float(value))
    raise TypeError(f"cannot make a scalar field from {type(value).__name__}")


def evaluate(field: ScalarField, p) -> float:
    """Evaluate ``field`` at the point ``p = (x, y, t)`` (or an array of them)."""
    p = np.asarray(p, dtype=float)
    return as_field(field)(p[..., 0], p[..., 1], p[..., 2])


def substitute(e: Expression, mapping) -> Expression:
    """Replace variables by expressions, e.g. ``{"t": parse("t + x*y")}``."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Unary):
        arg = substitute(e.arg, mapping)
        return neg(arg) if e.op == "neg" else func(e.op, arg)
    left = substitute(e.left, mapping)
    right = substitute(e.right, mapping)
    if e.op == "^":
        return power(left, right.value)
    return {"+": add, "-": sub, "*": mul, "/": div}[e.op](left, right)

"""Small arithmetic expression language over the variables x, y and t.

Grammar (LL(1), whitespace insensitive)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | "pi" | VAR | FUNC "(" expr ")" | "(" expr ")"

``^`` binds tighter than unary minus and is right associative, so ``-2^2``
is ``-(2^2)`` and ``2^3^2`` is ``2^(3^2)``.  Juxtaposition (``2x``) is a
syntax error.

Evaluation is vectorised: ``x``, ``y`` and ``t`` may be numpy arrays of
any broadcast-compatible shapes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

VARIABLES = ("x", "y", "t")
FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


class ExpressionError(ValueError):
    """Base class for parse and evaluation failures."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        self.offset = offset
        self.expected = expected
        detail = f"{message} at offset {offset}"
        if expected:
            detail += f" (expected {', '.join(expected)})"
        super().__init__(detail)


class ExpressionEvalError(ExpressionError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Pi, Neg, BinOp, Call]


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with the text it came from."""

    tree: Node
    source: str

    def __call__(self, x, y, t=0.0):
        return eval_expression(self, x, y, t)

    def __str__(self) -> str:
        return self.source


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "ident", "op", "end"
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    n = len(source)
    while True:
        while pos < n and source[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: tuple[str, ...]):
        tok = self.tok
        what = "end of input" if tok.kind == "end" else f"token {tok.text!r}"
        raise ExpressionSyntaxError(f"unexpected {what}", tok.offset, expected)

    def is_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            self.fail(("operator", "end of input"))
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.is_op("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.is_op("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.is_op("-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.is_op("^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            if tok.text == "pi":
                return Pi()
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in FUNCTIONS:
                if not self.is_op("("):
                    self.fail(("'('",))
                self.advance()
                arg = self.expr()
                if not self.is_op(")"):
                    self.fail(("')'",))
                self.advance()
                return Call(tok.text, arg)
            raise ExpressionSyntaxError(f"unknown identifier {tok.text!r}", tok.offset)
        if self.is_op("("):
            self.advance()
            node = self.expr()
            if not self.is_op(")"):
                self.fail(("')'",))
            self.advance()
            return node
        self.fail(("number", "variable", "function", "'('", "'-'"))


def parse_expression(source: str) -> Expression:
    """Parse ``source`` into an :class:`Expression`.

    Raises :class:`ExpressionSyntaxError` carrying the byte offset and the
    tokens that would have been accepted there.
    """
    if not isinstance(source, str):
        source = str(source)
    return Expression(_Parser(source).parse(), source)


def to_source(node: Node | Expression) -> str:
    """Render a tree back to text; the output re-parses to the same tree."""
    if isinstance(node, Expression):
        node = node.tree
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def _power(base, expo):
    base = np.asarray(base, dtype=float)
    expo = np.asarray(expo, dtype=float)
    bad = (base < 0) & (expo != np.round(expo))
    if np.any(bad):
        raise ExpressionEvalError("negative base with non-integral exponent")
    with np.errstate(all="ignore"):
        return np.power(base, expo)


def _eval(node: Node, env: dict):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Pi):
        return math.pi
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Call):
        with np.errstate(all="ignore"):
            return FUNCTIONS[node.func](_eval(node.arg, env))
    left = _eval(node.left, env)
    right = _eval(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        if np.any(np.asarray(right) == 0):
            raise ExpressionEvalError("division by zero")
        return np.divide(left, right)
    return _power(left, right)


def eval_expression(e: Expression | Node, x, y, t=0.0):
    """Evaluate at scalar or array coordinates.

    Returns a float when all inputs are scalars, otherwise an array with
    the broadcast shape of ``x``, ``y`` and ``t``.
    """
    tree = e.tree if isinstance(e, Expression) else e
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(t) == 0
    x, y, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(t, float))
    value = np.asarray(_eval(tree, {"x": x, "y": y, "t": t}), dtype=float)
    if not np.all(np.isfinite(value)):
        raise ExpressionEvalError("non-finite result")
    if scalar:
        return float(value)
    return np.broadcast_to(value, x.shape).copy()

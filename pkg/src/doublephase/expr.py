"""Scalar expression mini-language.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right-associative
    primary := number | name | name '(' args ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^9``. Evaluation works on
floats and on numpy arrays alike.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "ExprError", "ExprSyntaxError", "ExprEvalError",
    "Num", "Var", "Neg", "BinOp", "Call", "Expr",
    "parse", "evaluate", "to_source",
    "SPACE_VARS", "STATE_VARS", "ALL_VARS", "FUNCTIONS",
]

SPACE_VARS = frozenset({"x1", "x2"})
STATE_VARS = frozenset({"x1", "x2", "s1", "s2", "g1", "g2"})
ALL_VARS = STATE_VARS | {"n"}

# name -> (min args, max args); None means unbounded
FUNCTIONS = {
    "sin": (1, 1), "cos": (1, 1), "atan": (1, 1), "arctan": (1, 1),
    "abs": (1, 1), "exp": (1, 1), "log": (1, 1), "sqrt": (1, 1),
    "min": (2, None), "max": (2, None),
}
CONSTANTS = {"pi": math.pi}


class ExprError(Exception):
    def __init__(self, message, pos=None):
        self.pos = pos
        where = f" at offset {pos}" if pos is not None else ""
        super().__init__(f"{message}{where}")


class ExprSyntaxError(ExprError):
    pass


class ExprEvalError(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = 0


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = 0


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    pos: int = 0


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: int = 0


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    pos: int = 0


Expr = Union[Num, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(source, pos)
        if m is None or m.lastgroup is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, source, variables):
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = variables

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, value):
        kind, text, pos = self.tok
        if text != value or kind == "eof":
            found = "end of input" if kind == "eof" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.tok
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected token {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            _, op, pos = self.advance()
            node = BinOp(op, node, self.term(), pos)
        return node

    def term(self):
        node = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            _, op, pos = self.advance()
            node = BinOp(op, node, self.unary(), pos)
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            _, _, pos = self.advance()
            return Neg(self.unary(), pos)
        return self.power()

    def power(self):
        base = self.primary()
        if self.tok[0] == "op" and self.tok[1] == "^":
            _, _, pos = self.advance()
            return BinOp("^", base, self.unary(), pos)
        return base

    def primary(self):
        kind, text, pos = self.tok
        if kind == "num":
            self.advance()
            return Num(float(text), pos)
        if kind == "name":
            self.advance()
            if self.tok[1] == "(" and self.tok[0] == "op":
                return self.call(text, pos)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function {text!r} requires arguments", pos)
            if text in CONSTANTS:
                return Num(CONSTANTS[text], pos)
            if text not in self.variables:
                raise ExprSyntaxError(f"unknown identifier {text!r}", pos)
            return Var(text, pos)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "eof" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos)

    def call(self, name, pos):
        if name not in FUNCTIONS:
            raise ExprSyntaxError(f"unknown function {name!r}", pos)
        self.expect("(")
        args = [self.expr()]
        while self.tok[0] == "op" and self.tok[1] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise ExprSyntaxError(f"wrong number of arguments to {name!r}", pos)
        if name == "arctan":
            name = "atan"
        return Call(name, tuple(args), pos)


def parse(source: str, variables=STATE_VARS) -> Expr:
    """Parse ``source`` into an AST.

    ``variables`` is the set of free names the caller will bind; any other
    identifier is rejected at parse time.
    """
    if not isinstance(source, str):
        raise TypeError("expression source must be a string")
    if not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(source, frozenset(variables)).parse()


def _fail_if(mask, message, node):
    if np.any(mask):
        raise ExprEvalError(message, node.pos)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise ExprEvalError(f"unbound variable {node.name!r}", node.pos) from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            _fail_if(np.asarray(b) == 0, "division by zero", node)
            return np.divide(a, b)
        # '^'
        a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        _fail_if((a_arr == 0) & (b_arr < 0), "zero raised to a negative power", node)
        _fail_if((a_arr < 0) & (b_arr != np.round(b_arr)),
                 "negative base with non-integer exponent", node)
        with np.errstate(over="ignore"):
            return np.power(a_arr, b_arr)
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        f = node.func
        if f == "min":
            out = args[0]
            for a in args[1:]:
                out = np.minimum(out, a)
            return out
        if f == "max":
            out = args[0]
            for a in args[1:]:
                out = np.maximum(out, a)
            return out
        x = np.asarray(args[0], dtype=float)
        if f == "log":
            _fail_if(x <= 0, "log of non-positive value", node)
            return np.log(x)
        if f == "sqrt":
            _fail_if(x < 0, "sqrt of negative value", node)
            return np.sqrt(x)
        with np.errstate(over="ignore"):
            return {"sin": np.sin, "cos": np.cos, "atan": np.arctan,
                    "abs": np.abs, "exp": np.exp}[f](x)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(e: Expr, bindings: Mapping[str, object]):
    """Evaluate ``e`` with the given variable bindings.

    Bindings may be floats or broadcast-compatible numpy arrays; the result
    is a float for scalar bindings and an array otherwise.
    """
    out = _eval(e, bindings)
    arr = np.asarray(out, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    return arr


def to_source(e: Expr) -> str:
    """Render ``e`` back to a fully parenthesized source string."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def strip_positions(e: Expr) -> Expr:
    """Copy of ``e`` with every source offset set to zero (for structural comparison)."""
    if isinstance(e, Num):
        return Num(e.value)
    if isinstance(e, Var):
        return Var(e.name)
    if isinstance(e, Neg):
        return Neg(strip_positions(e.operand))
    if isinstance(e, BinOp):
        return BinOp(e.op, strip_positions(e.left), strip_positions(e.right))
    return Call(e.func, tuple(strip_positions(a) for a in e.args))


def free_variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    return set().union(*(free_variables(a) for a in e.args))

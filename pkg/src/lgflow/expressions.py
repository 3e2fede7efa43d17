"""Tiny arithmetic grammar for initial data, boundary data and spatial weights.

Grammar (whitespace-insensitive):

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+') unary | atom
    atom  := NUMBER | 'x' | 'y' | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
    FUNC  := 'min' | 'max' | 'step' | 'abs'

``step(t)`` is 1 where t >= 0 and 0 elsewhere; min/max take two arguments.
Compiled expressions are vectorised callables of the coordinate arrays
(x in 1D, x and y in 2D). No general-purpose parser dependency, no eval.
"""

from __future__ import annotations

import re

import numpy as np

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[()+\-*/,]))"
)

_FUNCS = {
    "min": (2, np.minimum),
    "max": (2, np.maximum),
    "abs": (1, np.abs),
    "step": (1, lambda t: np.where(np.asarray(t, float) >= 0.0, 1.0, 0.0)),
}


class ExpressionError(ValueError):
    """Raised for anything outside the documented grammar."""


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            rest = src[pos:].strip()
            if not rest:
                break
            raise ExpressionError(f"unexpected input at {rest[:12]!r}")
        tokens.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, value=None):
        k, v = self.tokens[self.i]
        if (kind and k != kind) or (value and v != value):
            raise ExpressionError(f"expected {value or kind}, found {v or k!r}")
        self.i += 1
        return v

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take("op")
            rhs = self.term()
            node = (np.add if op == "+" else np.subtract, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take("op")
            rhs = self.unary()
            node = (np.multiply if op == "*" else np.divide, node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take("op")
            return (np.negative, self.unary())
        if self.peek() == ("op", "+"):
            self.take("op")
            return self.unary()
        return self.atom()

    def atom(self):
        kind, value = self.peek()
        if kind == "num":
            self.take()
            return ("const", float(value))
        if kind == "name":
            self.take()
            if value in ("x", "y"):
                return ("coord", 0 if value == "x" else 1)
            if value in _FUNCS:
                arity, fn = _FUNCS[value]
                self.take("op", "(")
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.take("op")
                    args.append(self.expr())
                self.take("op", ")")
                if len(args) != arity:
                    raise ExpressionError(f"{value} takes {arity} argument(s)")
                return (fn, *args)
            raise ExpressionError(f"unknown name {value!r}")
        if (kind, value) == ("op", "("):
            self.take("op")
            node = self.expr()
            self.take("op", ")")
            return node
        raise ExpressionError(f"unexpected token {value or kind!r}")


def _evaluate(node, coords):
    head = node[0]
    if head == "const":
        return node[1]
    if head == "coord":
        if node[1] >= len(coords):
            raise ExpressionError("expression uses 'y' on a 1D grid")
        return coords[node[1]]
    args = [_evaluate(a, coords) for a in node[1:]]
    return head(*args)


def compile_expression(src: str):
    """Compile the documented grammar into a vectorised callable of coordinates."""
    parser = _Parser(_tokenize(src))
    tree = parser.expr()
    parser.take("end")

    def fn(*coords):
        out = _evaluate(tree, coords)
        if coords:
            out = np.broadcast_to(
                np.asarray(out, dtype=np.float64),
                np.broadcast_shapes(*(np.shape(c) for c in coords)),
            )
        return out

    fn.source = src
    return fn

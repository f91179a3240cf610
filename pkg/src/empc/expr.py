"""Tiny arithmetic-expression language for user-defined models and costs.

Supports `+ - * / ^`, unary minus, parentheses, numeric literals, and
variables named like ``x1``, ``u1``, ``w1``.  Expressions parse to a small
AST that can be evaluated on numpy arrays (broadcasting), differentiated
symbolically, and compiled to plain Python functions for hot loops.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .exceptions import InputError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: object
    right: object


def tokenize(text):
    text = text.rstrip()
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise InputError(f"bad character in expression at offset {pos}: {text[pos:pos+10]!r}")
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num"))))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("op", m.group("op")))
        pos = m.end()
    return tokens


def parse(text):
    """Parse an expression string into an AST."""
    tokens = tokenize(text)
    idx = 0

    def peek():
        return tokens[idx] if idx < len(tokens) else (None, None)

    def take(expected=None):
        nonlocal idx
        kind, val = peek()
        if kind is None:
            raise InputError(f"unexpected end of expression: {text!r}")
        if expected is not None and val != expected:
            raise InputError(f"expected {expected!r} at token {idx} in {text!r}, got {val!r}")
        idx += 1
        return kind, val

    def parse_expr():
        node = parse_term()
        while peek() == ("op", "+") or peek() == ("op", "-"):
            _, op = take()
            node = BinOp(op, node, parse_term())
        return node

    def parse_term():
        node = parse_factor()
        while peek() == ("op", "*") or peek() == ("op", "/"):
            _, op = take()
            node = BinOp(op, node, parse_factor())
        return node

    def parse_factor():
        if peek() == ("op", "-"):
            take()
            return BinOp("*", Num(-1.0), parse_factor())
        if peek() == ("op", "+"):
            take()
            return parse_factor()
        return parse_power()

    def parse_power():
        base = parse_atom()
        if peek() == ("op", "^"):
            take()
            return BinOp("^", base, parse_factor())  # right associative
        return base

    def parse_atom():
        kind, val = take()
        if kind == "num":
            return Num(val)
        if kind == "name":
            return Var(val)
        if val == "(":
            node = parse_expr()
            take(")")
            return node
        raise InputError(f"unexpected token {val!r} in {text!r}")

    node = parse_expr()
    if idx != len(tokens):
        raise InputError(f"trailing tokens after expression in {text!r}")
    return node


def variables(node):
    """Set of variable names appearing in the AST."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set()


def evaluate(node, env):
    """Evaluate on an environment mapping names to scalars/arrays."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise InputError(f"unknown variable {node.name!r}") from None
    a = evaluate(node.left, env)
    b = evaluate(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return a / b
    return a ** b


def _is_num(node, value=None):
    return isinstance(node, Num) and (value is None or node.value == value)


def simplify(node):
    """Constant folding plus trivial identities; keeps generated code short."""
    if not isinstance(node, BinOp):
        return node
    a = simplify(node.left)
    b = simplify(node.right)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(evaluate(BinOp(node.op, a, b), {}))
    if node.op == "+":
        if _is_num(a, 0.0):
            return b
        if _is_num(b, 0.0):
            return a
    elif node.op == "-":
        if _is_num(b, 0.0):
            return a
    elif node.op == "*":
        if _is_num(a, 0.0) or _is_num(b, 0.0):
            return Num(0.0)
        if _is_num(a, 1.0):
            return b
        if _is_num(b, 1.0):
            return a
    elif node.op == "/":
        if _is_num(a, 0.0):
            return Num(0.0)
        if _is_num(b, 1.0):
            return a
    elif node.op == "^":
        if _is_num(b, 1.0):
            return a
        if _is_num(b, 0.0):
            return Num(1.0)
    return BinOp(node.op, a, b)


def diff(node, name):
    """Symbolic derivative with respect to variable `name`.

    Exponents must be constants (polynomial/rational expressions only).
    """
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == name else 0.0)
    a, b = node.left, node.right
    da, db = diff(a, name), diff(b, name)
    if node.op == "+":
        out = BinOp("+", da, db)
    elif node.op == "-":
        out = BinOp("-", da, db)
    elif node.op == "*":
        out = BinOp("+", BinOp("*", da, b), BinOp("*", a, db))
    elif node.op == "/":
        num = BinOp("-", BinOp("*", da, b), BinOp("*", a, db))
        out = BinOp("/", num, BinOp("^", b, Num(2.0)))
    else:  # a ^ const
        if not isinstance(b, Num):
            raise InputError("cannot differentiate a non-constant exponent")
        out = BinOp("*", BinOp("*", b, BinOp("^", a, Num(b.value - 1.0))), da)
    return simplify(out)


def to_source(node):
    """Render the AST as a Python expression string."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    a, b = to_source(node.left), to_source(node.right)
    op = "**" if node.op == "^" else node.op
    return f"({a} {op} {b})"


def compile_fn(node, arg_names):
    """Compile the AST to a Python function of the given argument names."""
    src = f"def _compiled({', '.join(arg_names)}):\n    return {to_source(simplify(node))}\n"
    ns = {}
    exec(src, {"__builtins__": {}}, ns)  # AST comes from our own parser
    return ns["_compiled"]

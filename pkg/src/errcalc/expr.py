"""Expression language for functionals over coordinates ``x1..xN``.

Grammar (whitespace and newlines are ignored)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" int)?
    int    := ["-"] INTEGER | "(" ["-"] INTEGER ")"
    atom   := NUMBER | "pi" | xN | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Functions: ``exp log sin cos tanh sqrt`` and ``ind`` (indicator of a positive
argument, meant for test functions; its derivative is taken as 0).  Extra
names can be supplied as macros expanding to sub-trees, e.g. ``w(t)`` on the
truncated Wiener space.

Evaluation is forward-mode: every node yields its value, gradient and
optionally Hessian with respect to the coordinates, vectorised over a batch of
points.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ArityError, DomainError, ParseError

FUNCTIONS = ("exp", "log", "sin", "cos", "tanh", "sqrt", "ind")
NONSMOOTH = frozenset({"ind"})


# --------------------------------------------------------------------------
# AST


class Node:
    __slots__ = ()

    def __add__(self, other):
        return Binary("+", self, as_node(other))

    def __radd__(self, other):
        return Binary("+", as_node(other), self)

    def __sub__(self, other):
        return Binary("-", self, as_node(other))

    def __rsub__(self, other):
        return Binary("-", as_node(other), self)

    def __mul__(self, other):
        return Binary("*", self, as_node(other))

    def __rmul__(self, other):
        return Binary("*", as_node(other), self)

    def __truediv__(self, other):
        return Binary("/", self, as_node(other))

    def __rtruediv__(self, other):
        return Binary("/", as_node(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, k):
        if int(k) != k:
            raise TypeError("only integer powers are supported")
        return Pow(self, int(k))


@dataclass(frozen=True, eq=True)
class Const(Node):
    value: float

    def __str__(self):
        v = self.value
        if v == int(v) and abs(v) < 1e15:
            return str(int(v)) if v >= 0 else f"({int(v)})"
        return repr(v) if v >= 0 else f"({v!r})"


@dataclass(frozen=True, eq=True)
class Var(Node):
    index: int  # zero based

    def __str__(self):
        return f"x{self.index + 1}"


@dataclass(frozen=True, eq=True)
class Neg(Node):
    arg: Node

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True, eq=True)
class Binary(Node):
    op: str
    left: Node
    right: Node

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True, eq=True)
class Pow(Node):
    base: Node
    exponent: int

    def __str__(self):
        return f"{self.base}^{self.exponent}" if self.exponent >= 0 else f"{self.base}^({self.exponent})"


@dataclass(frozen=True, eq=True)
class Call(Node):
    name: str
    arg: Node

    def __str__(self):
        return f"{self.name}({self.arg})"


def as_node(x) -> Node:
    if isinstance(x, Node):
        return x
    if isinstance(x, Functional):
        return x.expr
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to an expression")


def walk(node: Node):
    yield node
    if isinstance(node, (Neg, Call)):
        yield from walk(node.arg)
    elif isinstance(node, Binary):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Pow):
        yield from walk(node.base)


def max_index(node: Node) -> int:
    """Largest zero-based coordinate index used, -1 for constants."""
    return max((n.index for n in walk(node) if isinstance(n, Var)), default=-1)


def substitute(node: Node, inner: Sequence[Node]) -> Node:
    """Replace ``x_i`` by ``inner[i]`` (composition ``node o inner``)."""
    memo: dict[int, Node] = {}

    def go(n):
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, Var):
            if n.index >= len(inner):
                raise ArityError(f"x{n.index + 1} has no substitute (only {len(inner)} given)")
            out = inner[n.index]
        elif isinstance(n, Const):
            out = n
        elif isinstance(n, Neg):
            out = Neg(go(n.arg))
        elif isinstance(n, Binary):
            out = Binary(n.op, go(n.left), go(n.right))
        elif isinstance(n, Pow):
            out = Pow(go(n.base), n.exponent)
        elif isinstance(n, Call):
            out = Call(n.name, go(n.arg))
        else:  # pragma: no cover
            raise TypeError(n)
        memo[key] = out
        return out

    return go(node)


def _mul(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and a.value == 0 or isinstance(b, Const) and b.value == 0:
        return Const(0.0)
    if isinstance(a, Const) and a.value == 1:
        return b
    if isinstance(b, Const) and b.value == 1:
        return a
    return Binary("*", a, b)


def _add(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and a.value == 0:
        return b
    if isinstance(b, Const) and b.value == 0:
        return a
    return Binary("+", a, b)


def differentiate(node: Node, i: int) -> Node:
    """Symbolic partial derivative with respect to the zero-based coordinate ``i``."""
    d = lambda n: differentiate(n, i)  # noqa: E731
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.index == i else 0.0)
    if isinstance(node, Neg):
        da = d(node.arg)
        return Const(0.0) if isinstance(da, Const) and da.value == 0 else Neg(da)
    if isinstance(node, Binary):
        a, b = node.left, node.right
        da, db = d(a), d(b)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            if isinstance(db, Const) and db.value == 0:
                return da
            return Binary("-", da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        # quotient rule
        num = Binary("-", _mul(da, b), _mul(a, db))
        if isinstance(db, Const) and db.value == 0:
            num = _mul(da, b)
        return Binary("/", num, Pow(b, 2))
    if isinstance(node, Pow):
        k = node.exponent
        if k == 0:
            return Const(0.0)
        inner = Const(1.0) if k == 1 else (node.base if k == 2 else Pow(node.base, k - 1))
        return _mul(_mul(Const(float(k)), inner), d(node.base))
    if isinstance(node, Call):
        a = node.arg
        outer = {
            "exp": lambda: node,
            "log": lambda: Binary("/", Const(1.0), a),
            "sin": lambda: Call("cos", a),
            "cos": lambda: Neg(Call("sin", a)),
            "tanh": lambda: Binary("-", Const(1.0), Pow(node, 2)),
            "sqrt": lambda: Binary("/", Const(0.5), node),
            "ind": lambda: Const(0.0),
        }[node.name]()
        return _mul(outer, d(a))
    raise TypeError(node)  # pragma: no cover


def dump(node: Node, indent: int = 0) -> str:
    """Indented tree rendering, one node per line."""
    pad = "  " * indent
    if isinstance(node, Const):
        return f"{pad}Const {node.value!r}"
    if isinstance(node, Var):
        return f"{pad}Var {node}"
    if isinstance(node, Neg):
        return f"{pad}Neg\n{dump(node.arg, indent + 1)}"
    if isinstance(node, Binary):
        return f"{pad}Binary {node.op}\n{dump(node.left, indent + 1)}\n{dump(node.right, indent + 1)}"
    if isinstance(node, Pow):
        return f"{pad}Pow ^{node.exponent}\n{dump(node.base, indent + 1)}"
    if isinstance(node, Call):
        return f"{pad}Call {node.name}\n{dump(node.arg, indent + 1)}"
    raise TypeError(node)  # pragma: no cover


# --------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)"
    r"|(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, text)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            tok_text = m.group()
            if tok_text == "**":
                tok_text = "^"
            toks.append(_Tok(kind, tok_text, line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


Macro = Callable[[list[Node]], Node]


class _Parser:
    def __init__(self, text: str, dim: int | None, macros: Mapping[str, Macro]):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.dim = dim
        self.macros = dict(macros)

    @property
    def tok(self):
        return self.toks[self.i]

    def fail(self, msg, tok=None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col, self.text)

    def eat(self, text):
        if self.tok.text != text:
            what = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
            self.fail(f"expected {text!r}, found {what}")
        self.i += 1
        return self.toks[self.i - 1]

    def parse(self) -> Node:
        if self.tok.kind == "eof":
            self.fail("empty expression")
        node = self.expr()
        if self.tok.kind != "eof":
            self.fail(f"unexpected {self.tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.tok
            self.i += 1
            node = Binary(op.text, node, self.operand(op, self.term))
        return node

    def term(self):
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.tok
            self.i += 1
            node = Binary(op.text, node, self.operand(op, self.unary))
        return node

    def operand(self, op, rule):
        # a dangling operator is reported at the operator itself
        if self.tok.kind == "eof" or self.tok.text in (")", ","):
            self.fail(f"missing operand after {op.text!r}", op)
        return rule()

    def unary(self):
        if self.tok.text in ("-", "+"):
            op = self.tok
            self.i += 1
            arg = self.operand(op, self.unary)
            return Neg(arg) if op.text == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.text == "^":
            op = self.tok
            self.i += 1
            if self.tok.kind == "eof":
                self.fail("missing exponent after '^'", op)
            base = Pow(base, self.integer())
            if self.tok.text == "^":
                self.fail("chained powers are ambiguous; use parentheses")
        return base

    def integer(self):
        paren = self.tok.text == "("
        if paren:
            self.i += 1
        sign = 1
        if self.tok.text == "-":
            sign = -1
            self.i += 1
        tok = self.tok
        if tok.kind != "num" or not re.fullmatch(r"\d+", tok.text):
            self.fail("exponent must be an integer literal")
        self.i += 1
        if paren:
            self.eat(")")
        return sign * int(tok.text)

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(float(tok.text))
        if tok.text == "(":
            self.i += 1
            node = self.expr()
            self.eat(")")
            return node
        if tok.kind == "name":
            self.i += 1
            m = re.fullmatch(r"x([1-9]\d*)", tok.text)
            if m and self.tok.text != "(":
                idx = int(m.group(1))
                if self.dim is not None and idx > self.dim:
                    raise ArityError(f"x{idx} out of range for dimension {self.dim} "
                                     f"(line {tok.line}, column {tok.col})")
                return Var(idx - 1)
            if tok.text == "pi" and self.tok.text != "(":
                return Const(math.pi)
            if self.tok.text != "(":
                self.fail(f"unknown name {tok.text!r}", tok)
            if tok.text not in FUNCTIONS and tok.text not in self.macros:
                self.fail(f"unknown function {tok.text!r}", tok)
            self.eat("(")
            args = [self.expr()]
            while self.tok.text == ",":
                self.i += 1
                args.append(self.expr())
            self.eat(")")
            if tok.text in self.macros:
                try:
                    return self.macros[tok.text](args)
                except (ValueError, TypeError) as exc:
                    self.fail(f"bad arguments to {tok.text}(): {exc}", tok)
            if len(args) != 1:
                self.fail(f"{tok.text}() takes exactly one argument", tok)
            return Call(tok.text, args[0])
        if tok.kind == "eof":
            self.fail("unexpected end of input")
        self.fail(f"unexpected {tok.text!r}")


def parse_expr(text: str, dim: int | None = None, macros: Mapping[str, Macro] | None = None) -> Node:
    return _Parser(text, dim, macros or {}).parse()


# --------------------------------------------------------------------------
# Forward-mode evaluation


@dataclass
class Jet:
    """Value, gradient and Hessian over a batch of ``n`` points."""

    v: np.ndarray  # (n,)
    g: np.ndarray | None = None  # (n, dim)
    h: np.ndarray | None = None  # (n, dim, dim)


def _outer(a, b):
    return a[:, :, None] * b[:, None, :]


def _unary_rules(name, a, order, where):
    """Return f(a), f'(a), f''(a) (derivatives only up to ``order``)."""
    d1 = d2 = None
    if name == "exp":
        v = np.exp(a)
        d1 = d2 = v
    elif name == "log":
        bad = ~(a > 0)
        if bad.any():
            _domain(where, "log of a non-positive number", bad)
        v = np.log(a)
        if order >= 1:
            d1 = 1.0 / a
            d2 = -d1 * d1
    elif name == "sin":
        v = np.sin(a)
        if order >= 1:
            d1 = np.cos(a)
            d2 = -v
    elif name == "cos":
        v = np.cos(a)
        if order >= 1:
            d1 = -np.sin(a)
            d2 = -v
    elif name == "tanh":
        v = np.tanh(a)
        if order >= 1:
            d1 = 1.0 - v * v
            d2 = -2.0 * v * d1
    elif name == "sqrt":
        bad = (a < 0) if order == 0 else ~(a > 0)
        if bad.any():
            _domain(where, "sqrt of a negative number" if order == 0 else
                    "sqrt is not differentiable at non-positive arguments", bad)
        v = np.sqrt(a)
        if order >= 1:
            d1 = 0.5 / v
            d2 = -0.25 / (v * a)
    elif name == "ind":
        v = (a > 0).astype(float)
        if order >= 1:
            d1 = d2 = np.zeros_like(a)
    else:  # pragma: no cover
        raise ValueError(name)
    return v, d1, d2


def _domain(where, msg, bad):
    k = int(np.flatnonzero(bad)[0])
    raise DomainError(f"{msg} in {where} (point #{k})")


def evaluate(node: Node, points: np.ndarray, order: int = 1) -> Jet:
    """Evaluate ``node`` on ``points`` of shape (n, dim) with derivatives up to ``order``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, dim = pts.shape
    memo: dict[int, Jet] = {}
    zeros_g = np.zeros((n, dim)) if order >= 1 else None
    zeros_h = np.zeros((n, dim, dim)) if order >= 2 else None

    def go(nd) -> Jet:
        key = id(nd)
        if key in memo:
            return memo[key]
        if isinstance(nd, Const):
            out = Jet(np.full(n, nd.value), zeros_g, zeros_h)
        elif isinstance(nd, Var):
            if nd.index >= dim:
                raise ArityError(f"x{nd.index + 1} out of range for dimension {dim}")
            g = h = None
            if order >= 1:
                g = np.zeros((n, dim))
                g[:, nd.index] = 1.0
            out = Jet(pts[:, nd.index].copy(), g, zeros_h)
        elif isinstance(nd, Neg):
            a = go(nd.arg)
            out = Jet(-a.v, None if a.g is None else -a.g, None if a.h is None else -a.h)
        elif isinstance(nd, Binary):
            out = _binary(nd, go(nd.left), go(nd.right), order)
        elif isinstance(nd, Pow):
            a = go(nd.base)
            k = nd.exponent
            if k < 0 and (a.v == 0).any():
                _domain(str(nd), "negative power of zero", a.v == 0)
            if k == 0:
                out = Jet(np.ones(n), zeros_g, zeros_h)
            else:
                v = a.v ** k
                d1 = k * a.v ** (k - 1) if order >= 1 else None
                d2 = (k * (k - 1) * a.v ** (k - 2) if k != 1 else np.zeros(n)) if order >= 2 else None
                out = _chain(a, v, d1, d2, order)
        elif isinstance(nd, Call):
            a = go(nd.arg)
            v, d1, d2 = _unary_rules(nd.name, a.v, order, str(nd))
            out = _chain(a, v, d1, d2, order)
        else:  # pragma: no cover
            raise TypeError(nd)
        memo[key] = out
        return out

    with np.errstate(all="ignore"):
        return go(node)


def _chain(a: Jet, v, d1, d2, order):
    g = h = None
    if order >= 1:
        g = d1[:, None] * a.g
    if order >= 2:
        h = d1[:, None, None] * a.h + d2[:, None, None] * _outer(a.g, a.g)
    return Jet(v, g, h)


def _binary(nd: Binary, a: Jet, b: Jet, order: int) -> Jet:
    op = nd.op
    if op in "+-":
        s = 1.0 if op == "+" else -1.0
        return Jet(a.v + s * b.v,
                   None if order < 1 else a.g + s * b.g,
                   None if order < 2 else a.h + s * b.h)
    if op == "/":
        if (b.v == 0).any():
            _domain(str(nd), "division by zero", b.v == 0)
        r = 1.0 / b.v
        b = _chain(b, r, -r * r if order >= 1 else None, 2.0 * r ** 3 if order >= 2 else None, order)
    v = a.v * b.v
    g = h = None
    if order >= 1:
        g = a.v[:, None] * b.g + b.v[:, None] * a.g
    if order >= 2:
        h = (a.v[:, None, None] * b.h + b.v[:, None, None] * a.h
             + _outer(a.g, b.g) + _outer(b.g, a.g))
    return Jet(v, g, h)


# --------------------------------------------------------------------------
# Functional


class Functional:
    """A scalar functional on R^dim given by an expression tree.

    Supports arithmetic with other functionals and numbers, composition with a
    vector of inner functionals, and exact forward-mode derivatives.
    """

    __slots__ = ("expr", "dim", "label")

    def __init__(self, expr: Node | str | float, dim: int | None = None, label: str | None = None,
                 macros: Mapping[str, Macro] | None = None):
        if isinstance(expr, str):
            label = label or expr
            expr = parse_expr(expr, dim, macros)
        expr = as_node(expr)
        used = max_index(expr) + 1
        if dim is None:
            dim = max(used, 1)
        elif used > dim:
            raise ArityError(f"expression uses x{used} but dimension is {dim}")
        self.expr = expr
        self.dim = int(dim)
        self.label = label

    def __repr__(self):
        return f"Functional({str(self)!r}, dim={self.dim})"

    def __str__(self):
        return self.label or str(self.expr)

    @property
    def smooth(self) -> bool:
        return not any(isinstance(n, Call) and n.name in NONSMOOTH for n in walk(self.expr))

    @property
    def is_constant(self) -> bool:
        return max_index(self.expr) < 0

    def _wrap(self, node, other=None):
        dim = self.dim if other is None else max(self.dim, getattr(other, "dim", 0))
        return Functional(node, dim)

    def __add__(self, o):
        return self._wrap(self.expr + as_node(o), o)

    def __radd__(self, o):
        return self._wrap(as_node(o) + self.expr, o)

    def __sub__(self, o):
        return self._wrap(self.expr - as_node(o), o)

    def __rsub__(self, o):
        return self._wrap(as_node(o) - self.expr, o)

    def __mul__(self, o):
        return self._wrap(self.expr * as_node(o), o)

    def __rmul__(self, o):
        return self._wrap(as_node(o) * self.expr, o)

    def __truediv__(self, o):
        return self._wrap(self.expr / as_node(o), o)

    def __neg__(self):
        return self._wrap(-self.expr)

    def __pow__(self, k):
        return self._wrap(self.expr ** k)

    def with_dim(self, dim: int) -> "Functional":
        return Functional(self.expr, dim, self.label)

    def compose(self, inner: Sequence["Functional"]) -> "Functional":
        """``self o (inner_1, ..., inner_k)``; result lives on the inner functionals' space."""
        inner = list(inner)
        dim = max(f.dim for f in inner)
        return Functional(substitute(self.expr, [f.expr for f in inner]), dim)

    def jet(self, points, order: int = 1) -> Jet:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ArityError(f"points have {pts.shape[1]} coordinates, functional expects {self.dim}")
        return evaluate(self.expr, pts, order)

    def __call__(self, points) -> np.ndarray:
        return self.jet(points, 0).v

    def grad(self, points) -> np.ndarray:
        return self.jet(points, 1).g

    def diff(self, i: int) -> "Functional":
        """Symbolic partial derivative in the one-based coordinate ``i``."""
        return Functional(differentiate(self.expr, i - 1), self.dim)

    def gradient(self) -> list["Functional"]:
        return [self.diff(i) for i in range(1, self.dim + 1)]

    def to_polynomial(self):
        from .poly import Polynomial

        return Polynomial.from_expr(self.expr, self.dim)


def coordinate(i: int, dim: int) -> Functional:
    """The coordinate functional ``x_i`` (one based)."""
    return Functional(Var(i - 1), dim)


def constant(c: float, dim: int) -> Functional:
    return Functional(Const(float(c)), dim)


def linear(coefs: Sequence[float], dim: int | None = None) -> Functional:
    """``sum_i coefs[i] * x_{i+1}`` with zero terms dropped."""
    node = None
    for i, c in enumerate(coefs):
        if c == 0:
            continue
        term = Var(i) if c == 1 else Binary("*", Const(float(c)), Var(i))
        node = term if node is None else Binary("+", node, term)
    return Functional(node if node is not None else Const(0.0), dim or len(coefs))


def as_functional(f, dim: int | None = None, macros=None) -> Functional:
    if isinstance(f, Functional):
        return f if dim is None or f.dim == dim else f.with_dim(max(dim, f.dim))
    if isinstance(f, (int, float)):
        return constant(f, dim or 1)
    if isinstance(f, (str, Node)):
        return Functional(f, dim, macros=macros)
    raise TypeError(f"cannot interpret {f!r} as a functional")


def eval_functional(F: Functional, w) -> tuple[float, np.ndarray]:
    """Value and exact coordinate gradient of ``F`` at a single point ``w``."""
    w = np.asarray(w, dtype=float).reshape(1, -1)
    if w.shape[1] != F.dim:
        raise ArityError(f"point has {w.shape[1]} coordinates, functional expects {F.dim}")
    j = F.jet(w, 1)
    return float(j.v[0]), j.g[0].copy()

"""Real functions on a base measure space.

A :class:`Field` evaluates on quadrature nodes and, when it is polynomial in
the coordinates, also carries the exact :class:`~errcalc.poly.Polynomial` so
Gaussian inner products can be taken in closed form.  Each field has a sympy
symbol used for the associated-measure bookkeeping of white noises.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable

import numpy as np
import sympy as sp

from .expr import Functional, as_functional
from .poly import Polynomial


def exact_number(x: float):
    """sympy number equal to the binary value of ``x`` (no rounding)."""
    x = float(x)
    if x == int(x):
        return sp.Integer(int(x))
    return sp.Rational(Fraction(x).numerator, Fraction(x).denominator)


class Field:
    __slots__ = ("fn", "poly", "sym", "const")

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], poly: Polynomial | None = None,
                 sym=None, const: float | None = None):
        self.fn = fn
        self.poly = poly
        self.sym = sym if sym is not None else sp.Symbol("f")
        self.const = const

    def __repr__(self):
        return f"Field({self.sym})"

    @classmethod
    def constant(cls, c: float, dim: int | None = None) -> "Field":
        c = float(c)
        poly = Polynomial.const(c, dim) if dim is not None else None
        return cls(lambda X: np.full(np.shape(X)[0], c), poly, exact_number(c), const=c)

    @classmethod
    def from_functional(cls, F: Functional, name: str | None = None) -> "Field":
        if F.is_constant:
            return cls.constant(float(F(np.zeros((1, F.dim)))[0]), F.dim)
        poly = F.to_polynomial()
        sym = sp.Symbol(name or f"[{F}]")
        return cls(lambda X, F=F: F(X), poly, sym)

    @classmethod
    def from_any(cls, f, dim: int | None = None, name: str | None = None) -> "Field":
        if isinstance(f, Field):
            return f
        if isinstance(f, (int, float, np.integer, np.floating)):
            return cls.constant(float(f), dim)
        if isinstance(f, (Functional, str)):
            return cls.from_functional(as_functional(f, dim), name)
        if callable(f):
            return cls(lambda X, f=f: np.asarray(f(X), dtype=float).reshape(np.shape(X)[0]),
                       None, sp.Symbol(name or getattr(f, "__name__", "f")))
        raise TypeError(f"cannot interpret {f!r} as a field")

    def at(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(X), dtype=float)

    def __mul__(self, other) -> "Field":
        other = other if isinstance(other, Field) else Field.constant(other)
        poly = None
        if self.poly is not None and other.poly is not None:
            poly = self.poly * other.poly
        elif self.poly is not None and other.const is not None:
            poly = self.poly * other.const
        elif other.poly is not None and self.const is not None:
            poly = other.poly * self.const
        a, b = self, other
        const = a.const * b.const if a.const is not None and b.const is not None else None
        return Field(lambda X: a.at(X) * b.at(X), poly, a.sym * b.sym, const)

    __rmul__ = __mul__

    def __add__(self, other) -> "Field":
        other = other if isinstance(other, Field) else Field.constant(other)
        poly = None
        if self.poly is not None and other.poly is not None:
            poly = self.poly + other.poly
        a, b = self, other
        const = a.const + b.const if a.const is not None and b.const is not None else None
        return Field(lambda X: a.at(X) + b.at(X), poly, a.sym + b.sym, const)

    __radd__ = __add__

    def compose(self, inner: "Callable[[np.ndarray], np.ndarray]") -> "Field":
        """``self o inner`` for a map of nodes to image points (numeric only)."""
        a = self
        return Field(lambda X: a.at(inner(X)), None, sp.Symbol(f"({a.sym})oX"))


def one(dim: int | None = None) -> Field:
    return Field.constant(1.0, dim)


def combine(coefs, fields) -> Field | None:
    """sum_i coefs[i] * fields[i], skipping zero fields (``None``); ``None`` if all vanish."""
    out = None
    for c, f in zip(coefs, fields):
        if f is None:
            continue
        term = (c if isinstance(c, Field) else Field.constant(c, f.poly.dim if f.poly else None)) * f
        out = term if out is None else out + term
    return out

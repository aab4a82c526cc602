"""Sparse multivariate polynomials with exact Gaussian algebra.

Used wherever integrands are polynomial in independent standard normal
coordinates: moments, chaos coefficients ``E[p Z_a]`` and L2 norms are then
closed form.
"""

from __future__ import annotations

import math
from collections import defaultdict
from functools import lru_cache

import numpy as np

from . import expr as E


@lru_cache(maxsize=None)
def gaussian_moment(k: int) -> float:
    """E[x^k] for x ~ N(0,1): (k-1)!! for even k, 0 for odd."""
    if k % 2:
        return 0.0
    out = 1.0
    for j in range(k - 1, 0, -2):
        out *= j
    return out


@lru_cache(maxsize=None)
def monomial_to_hermite(n: int) -> tuple[tuple[int, float], ...]:
    """Coefficients of x^n in the probabilists' Hermite basis: x^n = sum_j a_j He_j(x)."""
    out = []
    for k in range(n // 2 + 1):
        out.append((n - 2 * k, math.factorial(n) / (math.factorial(k) * 2 ** k * math.factorial(n - 2 * k))))
    return tuple(out)


@lru_cache(maxsize=None)
def hermite_coefficients(n: int) -> tuple[tuple[int, float], ...]:
    """He_n(x) = sum_k c_k x^k (probabilists')."""
    out = []
    for m in range(n // 2 + 1):
        c = (-1) ** m * math.factorial(n) / (math.factorial(m) * math.factorial(n - 2 * m) * 2 ** m)
        out.append((n - 2 * m, c))
    return tuple(out)


class Polynomial:
    """Polynomial in ``dim`` variables stored as {exponent tuple: coefficient}."""

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms=None):
        self.dim = dim
        self.terms: dict[tuple[int, ...], float] = {}
        for e, c in (terms or {}).items():
            if c != 0:
                self.terms[tuple(e)] = float(c)

    @classmethod
    def const(cls, c: float, dim: int) -> "Polynomial":
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def var(cls, i: int, dim: int) -> "Polynomial":
        e = [0] * dim
        e[i] = 1
        return cls(dim, {tuple(e): 1.0})

    @classmethod
    def hermite(cls, alpha, normalized: bool = True) -> "Polynomial":
        """prod_i He_{alpha_i}(x_i), divided by sqrt(alpha!) when ``normalized``."""
        dim = len(alpha)
        p = cls.const(1.0, dim)
        for i, a in enumerate(alpha):
            if a == 0:
                continue
            factor = {}
            for k, c in hermite_coefficients(a):
                e = [0] * dim
                e[i] = k
                factor[tuple(e)] = c
            p = p * cls(dim, factor)
        if normalized:
            p = p * (1.0 / math.sqrt(math.prod(math.factorial(a) for a in alpha)))
        return p

    @classmethod
    def from_expr(cls, node: E.Node, dim: int) -> "Polynomial | None":
        """Exact conversion of a polynomial expression; ``None`` if it is not one."""
        memo = {}

        def go(n):
            if id(n) in memo:
                return memo[id(n)]
            if isinstance(n, E.Const):
                out = cls.const(n.value, dim)
            elif isinstance(n, E.Var):
                out = cls.var(n.index, dim)
            elif isinstance(n, E.Neg):
                a = go(n.arg)
                out = None if a is None else a * -1.0
            elif isinstance(n, E.Binary):
                a, b = go(n.left), go(n.right)
                if a is None or b is None:
                    out = None
                elif n.op == "+":
                    out = a + b
                elif n.op == "-":
                    out = a - b
                elif n.op == "*":
                    out = a * b
                else:
                    c = b.constant_value()
                    out = None if c is None or c == 0 else a * (1.0 / c)
            elif isinstance(n, E.Pow):
                a = go(n.base)
                out = None if a is None or n.exponent < 0 else a ** n.exponent
            else:
                out = None
            memo[id(n)] = out
            return out

        return go(node)

    def constant_value(self):
        if not self.terms:
            return 0.0
        if len(self.terms) == 1 and (0,) * self.dim in self.terms:
            return self.terms[(0,) * self.dim]
        return None

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __add__(self, other):
        other = _lift(other, self.dim)
        out = defaultdict(float, self.terms)
        for e, c in other.terms.items():
            out[e] += c
        return Polynomial(self.dim, out)

    __radd__ = __add__

    def __sub__(self, other):
        return self + _lift(other, self.dim) * -1.0

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(self.dim, {e: c * other for e, c in self.terms.items()})
        out = defaultdict(float)
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                out[tuple(a + b for a, b in zip(e1, e2))] += c1 * c2
        return Polynomial(self.dim, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial.const(1.0, self.dim)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def diff(self, i: int) -> "Polynomial":
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                e2 = list(e)
                e2[i] -= 1
                out[tuple(e2)] = c * e[i]
        return Polynomial(self.dim, out)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            term = np.full(pts.shape[0], c)
            for i, k in enumerate(e):
                if k:
                    term = term * pts[:, i] ** k
            out += term
        return out

    def gaussian_mean(self) -> float:
        """E[p(x)] under N(0, I_dim)."""
        return sum(c * math.prod(gaussian_moment(k) for k in e) for e, c in self.terms.items())

    def hermite_expansion(self) -> dict[tuple[int, ...], float]:
        """Coefficients on the *normalized* products He_a / sqrt(a!), i.e. E[p Z_a]."""
        raw = defaultdict(float)
        for e, c in self.terms.items():
            parts = [monomial_to_hermite(k) for k in e]
            stack = [((), c)]
            for part in parts:
                stack = [(idx + (j,), coef * a) for idx, coef in stack for j, a in part]
            for idx, coef in stack:
                raw[idx] += coef
        return {a: c * math.sqrt(math.prod(math.factorial(k) for k in a)) for a, c in raw.items() if c != 0}

    def gaussian_norm_sq(self) -> float:
        """E[p^2] under N(0, I) via Hermite Parseval."""
        return sum(c * c for c in self.hermite_expansion().values())

    def __repr__(self):
        return f"Polynomial(dim={self.dim}, terms={len(self.terms)})"


def _lift(x, dim):
    return x if isinstance(x, Polynomial) else Polynomial.const(float(x), dim)

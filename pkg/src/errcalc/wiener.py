"""Ornstein-Uhlenbeck structure on a truncated Wiener space.

The path is driven by ``n_inc`` i.i.d. standard normal increments ``x_i`` on
a uniform grid of [0, 1]; ``int f dw = sum_i fbar_i x_i / sqrt(n_inc)`` with
``fbar_i`` the cell averages of f, so the discrete Ito isometry is exact for
step functions.  Chaos bases are Hermite products in rotated coordinates
``y_j = int h_j dw`` where (h_j) is an orthonormal basis of step functions
with ``h_1 = 1`` (the Haar system when ``n_inc`` is a power of two), hence
``y_1 = w(1)``.  The copy space of the sharp operator is represented by its
first chaos ``yhat_k``; for ``X`` smooth in the increments
``E_mhat[X^# yhat_k] = (H grad X)_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import rng as _rng
from .errors import DomainError, QuadratureError, SizeError, TruncationError, ValidationError
from .expr import Const, Functional, Node, as_functional, evaluate, linear, max_index
from .fields import Field
from .mv_gradient import build_dgradient, mv_gradient
from .poly import Polynomial
from .structures import ErrorStructure, gaussian_product
from .white_noise import (BaseMeasureSpace, HValuedWhiteNoise, Projection, ScalarWhiteNoise, haar_basis,
                          hermite_space, sample_hvalued_wn, transform_pair_field)


# --------------------------------------------------------------------------
# Truncated Wiener space


def rotation(n_inc: int) -> np.ndarray:
    """Orthogonal H with H[j, i] = h_j on cell i / sqrt(n_inc); first row constant."""
    levels = int(round(math.log2(n_inc))) if n_inc > 0 else 0
    if 2 ** levels == n_inc:
        mids = (np.arange(n_inc) + 0.5) / n_inc
        return haar_basis(mids, levels) / math.sqrt(n_inc)
    A = np.eye(n_inc)
    A[:, 0] = 1.0
    Q, _ = np.linalg.qr(A)
    Q *= np.sign(Q[0, 0])
    return Q.T


@dataclass(frozen=True)
class TruncatedWienerSpace:
    n_inc: int

    def __post_init__(self):
        if self.n_inc < 1:
            raise ValidationError(["n_inc must be >= 1"])

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_inc + 1)

    def cell_averages(self, f: Callable[[np.ndarray], np.ndarray], points: int = 8) -> np.ndarray:
        """fbar_i = n_inc * int_{cell i} f, by Gauss-Legendre on each cell."""
        x, w = leggauss(points)
        g = self.grid
        t = g[:-1, None] + (x[None, :] + 1) / 2 * np.diff(g)[:, None]
        return (np.asarray(f(t), dtype=float).reshape(t.shape) * w).sum(axis=1) / 2

    def integral(self, f) -> Functional:
        """int f dw as a linear functional of the increments.

        ``f`` is a callable on [0, 1] (discretized by cell averages) or an
        array of n_inc step values.
        """
        vals = np.asarray(f, dtype=float) if not callable(f) else self.cell_averages(f)
        if vals.shape != (self.n_inc,):
            raise ValidationError([f"expected {self.n_inc} step values, got shape {vals.shape}"])
        return linear(vals / math.sqrt(self.n_inc), self.n_inc)

    def brownian(self, t: float) -> Functional:
        """w(t) = int 1_[0,t] dw (piecewise linear between grid points)."""
        if not 0.0 <= t <= 1.0:
            raise DomainError(f"w(t) needs t in [0, 1], got {t}")
        n = self.n_inc
        overlap = np.clip(t * n - np.arange(n), 0.0, 1.0)
        return linear(overlap / math.sqrt(n), n)

    def path(self, x: np.ndarray, t) -> np.ndarray:
        """w(t) for increment samples x of shape (m, n_inc)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = self.n_inc
        overlap = np.clip(t[:, None] * n - np.arange(n)[None, :], 0.0, 1.0)
        return np.asarray(x, dtype=float) @ overlap.T / math.sqrt(n)

    def macros(self) -> dict:
        def w_macro(args: list[Node]) -> Node:
            if len(args) != 1 or max_index(args[0]) >= 0:
                raise ValueError("w() takes one constant time argument")
            t = float(evaluate(args[0], np.zeros((1, 1)), 0).v[0])
            return self.brownian(t).expr

        return {"w": w_macro}


def ou_structure(n_inc: int) -> ErrorStructure:
    """N(0,1)^n_inc with identity gamma_field, parsing ``w(t)`` in expressions."""
    W = TruncatedWienerSpace(n_inc)
    base = gaussian_product(n_inc)
    return ErrorStructure(n_inc, base.sampler, base.gamma_field, f"wiener_ou({n_inc})",
                          constant_gamma=base.constant_gamma, macros=W.macros())


# --------------------------------------------------------------------------
# Sharp operator


@dataclass
class SharpGradient:
    """X^#(w, what) = grad X(w) . what, with what the increments of an independent copy."""

    X: Functional

    def __call__(self, w, what) -> np.ndarray:
        w = np.atleast_2d(w)
        what = np.atleast_2d(what)
        return np.einsum("ni,ni->n", self.X.grad(w), what) if len(w) == len(what) else \
            what @ self.X.grad(w).T  # (n_hat, n_w)

    def copy_coefficients(self, w, H: np.ndarray, K: int) -> np.ndarray:
        """E_mhat[X^# yhat_k](w) = (H grad X(w))_k for k < K, shape (n, K)."""
        return self.X.grad(np.atleast_2d(w)) @ H[:K].T

    def axiom_check(self, w_points: np.ndarray, n_hat: int, seed: int) -> dict:
        """Average of (X^#)^2 over n_hat copies against Gamma[X](w) = |grad X(w)|^2."""
        what = _rng.sample_points(lambda g, n: g.standard_normal((n, self.X.dim)), n_hat, seed)
        vals = self(w_points, what) ** 2  # (n_hat, n_w)
        est = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(n_hat)
        target = np.sum(self.X.grad(np.atleast_2d(w_points)) ** 2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, np.abs(est - target) / se, np.where(np.abs(est - target) < 1e-12, 0.0, np.inf))
        return {"estimate": est, "stderr": se, "target": target, "z": z}


def sharp(X, n_inc: int | None = None) -> SharpGradient:
    if isinstance(X, str):
        if n_inc is None:
            raise ValidationError(["n_inc is needed to parse a string functional"])
        X = ou_structure(n_inc).functional(X)
    if not X.smooth:
        raise DomainError(f"{X} is not C1")
    return SharpGradient(X)


# --------------------------------------------------------------------------
# Chaos basis


def linear_substitute(P: Polynomial, A: np.ndarray) -> Polynomial:
    """P(A y) as a polynomial in y."""
    n_out = A.shape[1]
    lin = [Polynomial(n_out, {tuple(int(j == k) for j in range(n_out)): A[i, k]
                              for k in range(n_out) if A[i, k] != 0}) for i in range(A.shape[0])]
    out = Polynomial(n_out)
    powers: dict[tuple[int, int], Polynomial] = {}
    for e, c in P.terms.items():
        term = Polynomial.const(c, n_out)
        for i, k in enumerate(e):
            if k:
                if (i, k) not in powers:
                    powers[(i, k)] = lin[i] ** k
                term = term * powers[(i, k)]
        out = out + term
    return out


def default_index_bounds(n_inc: int, degree: int, cap: int) -> dict[int, int]:
    """Number of leading rotated coordinates allowed in each chaos, filling up to ``cap``."""
    bounds = {0: 0}
    total = 1
    for d in range(1, degree + 1):
        L = n_inc
        while L > 0 and total + math.comb(L + d - 1, d) > cap:
            L -= 1
        if d == 1 and L < n_inc:
            raise SizeError(f"first chaos alone ({n_inc} elements) exceeds the cap of {cap}")
        bounds[d] = L
        total += math.comb(L + d - 1, d) if L else 0
    return bounds


def _indices(n_inc: int, degree: int, bounds: dict[int, int]) -> list[tuple[int, ...]]:
    import itertools

    out = [(0,) * n_inc]
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(bounds.get(d, 0)), d):
            a = [0] * n_inc
            for i in combo:
                a[i] += 1
            out.append(tuple(a))
    return out


class ChaosBasis(BaseMeasureSpace):
    """Orthonormal Hermite products Z_a(y), y = H x, as a basis of L2(W, m) truncated by degree."""

    kind = "chaos"

    def __init__(self, n_inc: int, degree: int = 3, cap: int = 200, index_bounds: dict[int, int] | None = None,
                 mc_samples: int = 10 ** 6, mc_seed: int = 0, stderr_budget: float = 1e-3):
        if degree < 0:
            raise ValidationError(["chaos degree must be >= 0"])
        bounds = index_bounds or default_index_bounds(n_inc, degree, cap)
        self.indices = _indices(n_inc, degree, bounds)
        if len(self.indices) > cap:
            raise SizeError(f"{len(self.indices)} chaos elements exceed the cap of {cap}")
        super().__init__(n_inc, 1.0, len(self.indices), f"chaos(n_inc={n_inc}, degree={degree})")
        self.degree = degree
        self.bounds = bounds
        self.H = rotation(n_inc)
        self.position = {a: i for i, a in enumerate(self.indices)}
        self.mc_samples, self.mc_seed, self.stderr_budget = mc_samples, mc_seed, stderr_budget

    def element(self, r: int) -> Polynomial:
        """Z_r as a polynomial in the increments x."""
        return linear_substitute(Polynomial.hermite(self.indices[r]), self.H)

    def rotated(self, P: Polynomial) -> Polynomial:
        """P(x) rewritten in y, using x = H^T y."""
        return linear_substitute(P, self.H.T)

    def orthonormality_error(self) -> float:
        """max |E[Z_a Z_b] - delta_ab| in closed form, in increment coordinates."""
        Z = [self.element(r) for r in range(self.N)]
        worst = 0.0
        for a in range(self.N):
            for b in range(a, self.N):
                worst = max(worst, abs((Z[a] * Z[b]).gaussian_mean() - (a == b)))
        return worst

    @cached_property
    def _mc(self):
        y = _rng.sample_points(lambda g, n: g.standard_normal((n, self.dim)), self.mc_samples, self.mc_seed)
        B = np.array([Polynomial.hermite(a)(y) for a in self.indices])
        return y, B

    def project(self, f) -> Projection:
        f = Field.from_any(f, self.dim)
        if f.const is not None:
            coef = np.zeros(self.N)
            coef[0] = f.const
            return Projection(coef, f.const ** 2)
        if f.poly is not None and f.poly.dim == self.dim:
            exp = self.rotated(f.poly).hermite_expansion()
            coef = np.zeros(self.N)
            for a, c in exp.items():
                j = self.position.get(a)
                if j is not None:
                    coef[j] = c
            return Projection(coef, float(sum(c * c for c in exp.values())))
        y, B = self._mc
        v = f.at(y @ self.H)
        coef = B @ v / len(v)
        norm_sq = float(v @ v / len(v))
        stderr = float(np.sqrt(np.maximum((B * v) ** 2, 0).mean(axis=1) - coef ** 2).max() / math.sqrt(len(v)))
        if stderr > self.stderr_budget * max(math.sqrt(norm_sq), 1e-300):
            raise QuadratureError(f"chaos coefficients have Monte Carlo stderr {stderr:.2e}")
        return Projection(coef, norm_sq, stderr)

    def dot(self, a, b) -> float:
        a, b = Field.from_any(a, self.dim), Field.from_any(b, self.dim)
        if a.poly is not None and b.poly is not None:
            return (a.poly * b.poly).gaussian_mean()
        y, _ = self._mc
        x = y @ self.H
        return float(np.mean(a.at(x) * b.at(x)))

    def gram(self):
        return np.eye(self.N)  # closed form; verified by orthonormality_error


def chaos_basis(n_inc: int, degree: int = 3, cap: int = 200, index_bounds=None) -> ChaosBasis:
    return ChaosBasis(n_inc, degree, cap, index_bounds)


# --------------------------------------------------------------------------
# H-valued white noise from the chaos and d_G X on the copy space


def wiener_hvalued_wn(basis: ChaosBasis, K: int, seed: int, size: int | None = None) -> HValuedWhiteNoise:
    """int Y dnu = sum_{k,n} E_m[Y Z_n] yhat_k g_{n,k}; component k is the coordinate on yhat_k."""
    if not 1 <= K <= basis.dim:
        raise ValidationError([f"copy basis size K must be in [1, {basis.dim}]"])
    return sample_hvalued_wn(basis, K, seed, size)


def copy_fields(X: Functional, H: np.ndarray, K: int) -> list[Functional]:
    """(H grad X)_k as functionals, polynomial whenever X is."""
    grads = X.gradient()
    out = []
    for k in range(K):
        acc = None
        for i, g in enumerate(grads):
            if H[k, i] == 0 or (g.is_constant and float(g(np.zeros((1, X.dim)))[0]) == 0.0):
                continue
            term = g * float(H[k, i])
            acc = term if acc is None else acc + term
        out.append(acc if acc is not None else Functional(0.0, X.dim))
    return out


def wiener_mvg(X: Functional, nu: HValuedWhiteNoise) -> ScalarWhiteNoise:
    """d_G X = sum_k nu_k( . E_mhat[X^# yhat_k])."""
    H = nu.space.H
    return transform_pair_field(nu, copy_fields(X, H, nu.K), names=[f"#{k + 1}" for k in range(nu.K)])


def _target(X: Functional, Y: Functional, mc_samples: int = 10 ** 6, seed: int = 0) -> tuple[float, float]:
    """E_m[Y^2 Gamma[X]] = E[Y^2 |grad X|^2], closed form when polynomial."""
    P = Y.to_polynomial()
    G = [g.to_polynomial() for g in X.gradient()]
    if P is not None and all(g is not None for g in G):
        acc = Polynomial(X.dim)
        for g in G:
            acc = acc + g * g
        return float((P * P * acc).gaussian_mean()), 0.0
    x = _rng.sample_points(lambda g, n: g.standard_normal((n, X.dim)), mc_samples, seed)
    v = Y(x) ** 2 * np.sum(X.grad(x) ** 2, axis=1)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


@dataclass
class TruncationLevel:
    degree: int
    K: int
    N: int
    parseval: float
    defect: float


@dataclass
class WienerVarianceReport:
    target: float
    target_se: float
    levels: list[TruncationLevel]
    empirical: float
    empirical_se: float
    monotone: bool
    extra: dict = field(default_factory=dict)


def wiener_mvg_variance_check(X, Y, n_inc: int = 16, truncations: Sequence[tuple[int, int]] | None = None,
                              realizations: int = 10 ** 4, seed: int = 0, cap: int = 200,
                              budget: float = 1e-2) -> WienerVarianceReport:
    """Parseval sums sum c_{n,k}^2 with c_{n,k} = E_m[Y Z_n E_mhat[X^# yhat_k]] per truncation level.

    The empirical variance uses the last (largest) level.  Raises
    :class:`TruncationError` when that level's defect exceeds ``budget``
    relative to the target.
    """
    S = ou_structure(n_inc)
    X, Y = S.functional(X), S.functional(Y)
    truncations = list(truncations or [(1, 1), (1, n_inc), (3, n_inc)])
    target, target_se = _target(X, Y)
    levels = []
    nu_last = None
    for degree, K in truncations:
        basis = chaos_basis(n_inc, degree, cap)
        nu = wiener_hvalued_wn(basis, K, seed, realizations)
        dG = wiener_mvg(X, nu)
        par = dG.variance(Field.from_functional(Y))
        levels.append(TruncationLevel(degree, K, basis.N, par, target - par))
        nu_last = dG
    vals = np.asarray(nu_last(Field.from_functional(Y)))
    sq = vals ** 2
    emp, emp_se = float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(len(sq)))
    tol = 1e-10 * max(1.0, abs(target))
    pars = [lv.parseval for lv in levels]
    monotone = all(b >= a - tol for a, b in zip(pars, pars[1:])) and all(p <= target + tol + 3 * target_se for p in pars)
    if levels[-1].defect > budget * max(abs(target), 1e-300) + 3 * target_se:
        raise TruncationError(f"truncation defect {levels[-1].defect:.3e} exceeds budget {budget:g} * target")
    return WienerVarianceReport(target, target_se, levels, emp, emp_se, monotone)


def cross_construction(X, Y, n_inc: int = 16, degree: int = 2, realizations: int = 10 ** 4,
                       seed: int = 0) -> dict:
    """Variance of int Y d_G X built by mv_gradient on the coordinate structure with a Hermite noise."""
    S = ou_structure(n_inc)
    X, Y = S.functional(X), S.functional(Y)
    D = build_dgradient(S)
    nu = sample_hvalued_wn(hermite_space(n_inc, degree), n_inc, seed, realizations)
    dG = mv_gradient(X, D, nu)
    f = Field.from_functional(Y)
    sq = np.asarray(dG(f)) ** 2
    target, target_se = _target(X, Y)
    return {"empirical": float(sq.mean()), "empirical_se": float(sq.std(ddof=1) / math.sqrt(len(sq))),
            "truncated_variance": dG.variance(f), "target": target, "target_se": target_se}

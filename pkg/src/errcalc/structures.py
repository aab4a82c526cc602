"""Error structures on coordinate spaces and the carre du champ calculus.

An :class:`ErrorStructure` is ``R^dim`` with a sampling law ``m`` and a field
of symmetric PSD matrices ``gamma_field(w)[i, j] = Gamma[x_i, x_j](w)``.  For
functionals built from the coordinates the first-order functional calculus
gives ``Gamma[U, V] = grad U^T gamma_field grad V``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .errors import DomainError, NonFiniteError, ValidationError
from .expr import Functional, as_functional
from .linalg import check_psd


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    n_samples: int
    seed: int

    def z(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == target else float("inf")
        return abs(self.value - target) / self.stderr


@dataclass(frozen=True)
class ErrorStructure:
    dim: int
    sampler: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)
    gamma_field: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    label: str = "structure"
    # set when gamma_field is constant; enables closed-form paths
    constant_gamma: np.ndarray | None = field(default=None, repr=False)
    macros: dict = field(default_factory=dict, repr=False)

    def sample(self, n: int, seed: int) -> np.ndarray:
        """n points distributed as m; identical seeds give identical streams."""
        return _rng.sample_points(self.sampler, n, seed)

    def gamma_at(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        G = np.asarray(self.gamma_field(pts), dtype=float)
        if G.ndim == 2:
            G = np.broadcast_to(G, (pts.shape[0], self.dim, self.dim))
        return G

    def functional(self, f) -> Functional:
        """Parse or adapt ``f`` to a functional on this structure's coordinates."""
        return as_functional(f, self.dim, macros=self.macros)


def gaussian_product(dim: int) -> ErrorStructure:
    """m = N(0,1)^dim with identity gamma_field (finite-dimensional Ornstein-Uhlenbeck)."""
    return gaussian_aniso(dim, np.eye(dim), label=f"gaussian_product({dim})")


def gaussian_aniso(dim: int, matrix, label: str | None = None) -> ErrorStructure:
    """m = N(0,1)^dim with a constant PSD gamma_field."""
    G = np.array(matrix, dtype=float).reshape(dim, dim)
    if not np.allclose(G, G.T, rtol=0, atol=1e-12):
        raise ValidationError(["gamma matrix must be symmetric"])
    check_psd(G, tol=1e-10)
    G.setflags(write=False)

    def sampler(gen, n):
        return gen.standard_normal((n, dim))

    def gamma_field(pts):
        return np.broadcast_to(G, (np.shape(pts)[0], dim, dim))

    return ErrorStructure(dim, sampler, gamma_field, label or f"gaussian_aniso({dim})", constant_gamma=G)


CATALOG = {"gaussian_product": gaussian_product, "gaussian_aniso": gaussian_aniso}


def _grads(S: ErrorStructure, U: Functional, pts) -> np.ndarray:
    if not U.smooth:
        raise DomainError(f"{U} is not C1; Gamma is only defined here for C1 expressions")
    return U.jet(pts, 1).g


def _bilinear(gu, G, gv):
    # symmetric by construction: swapping (u, v) gives a bit-identical result
    a = np.einsum("ni,nij,nj->n", gu, G, gv)
    b = np.einsum("ni,nij,nj->n", gv, G, gu)
    return 0.5 * (a + b)


def gamma(S: ErrorStructure, U, V, w):
    """Gamma[U, V](w) = grad U^T gamma_field(w) grad V; scalar for one point, array for a batch."""
    U, V = S.functional(U), S.functional(V)
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    pts = np.atleast_2d(w)
    out = _bilinear(_grads(S, U, pts), S.gamma_at(pts), _grads(S, V, pts))
    return float(out[0]) if single else out


def gamma_matrix(S: ErrorStructure, X: Sequence, w) -> np.ndarray:
    """Matrix Gamma[X_i, X_j](w); shape (d, d) for one point, (n, d, d) for a batch."""
    X = [S.functional(x) for x in X]
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    pts = np.atleast_2d(w)
    J = np.stack([_grads(S, x, pts) for x in X], axis=1)  # (n, d, dim)
    G = S.gamma_at(pts)
    M = np.einsum("nia,nab,njb->nij", J, G, J)
    M = 0.5 * (M + np.swapaxes(M, 1, 2))
    return M[0] if single else M


def dirichlet_form(S: ErrorStructure, U, V, n: int, seed: int) -> MonteCarloEstimate:
    """E[U, V] = 1/2 int Gamma[U, V] dm by Monte Carlo over n draws of m."""
    if n < 2:
        raise ValidationError(["dirichlet_form needs n >= 2"])
    pts = S.sample(n, seed)
    vals = gamma(S, U, V, pts)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("non-finite Gamma value in Monte Carlo sample")
    half = 0.5 * vals
    return MonteCarloEstimate(float(half.mean()), float(half.std(ddof=1) / np.sqrt(n)), n, seed)


def mean_estimate(values: np.ndarray, seed: int = 0) -> MonteCarloEstimate:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("non-finite value in Monte Carlo sample")
    n = values.size
    return MonteCarloEstimate(float(values.mean()), float(values.std(ddof=1) / np.sqrt(n)), n, seed)


def generator_compose(AX, G, f, x) -> float:
    """A[f o X] = sum_i A[X_i] f_i(X) + 1/2 sum_ij Gamma[X_i, X_j] f_ij(X).

    ``AX`` and ``G`` are the values of A[X_i] and Gamma[X_i, X_j] at the point,
    ``x`` the value X(w); second derivatives come from forward-on-forward jets.
    """
    AX = np.atleast_1d(np.asarray(AX, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f = as_functional(f, len(x))
    j = f.jet(x[None, :], 2)
    return float(AX @ j.g[0] + 0.5 * np.sum(G * j.h[0]))

"""Gaussian white noise measures by truncated orthonormal expansion.

A base space carries a bounded positive measure ``mu`` and orthonormal
functions ``xi_1..xi_N`` of L2(mu).  A scalar white noise is
``nu(f) = sum_n (f, xi_n) g_n`` with i.i.d. standard normal ``g_n``; an
H-valued one (H = R^K) stacks K independent copies.  Every noise here is
stored as K independent coefficient rows plus a (p x K) array of weight
fields ``psi``: output ``i`` is ``sum_k nu_k(f * psi[i][k])``.  The
transformations (multiplication by a function, pairing with a vector or a
vector field) only act on ``psi``, and the associated measure is tracked as
an exact sympy density matrix against ``mu``.

Batches: ``size=M`` draws M independent realizations lazily from a
chunked stream; evaluations then return arrays with a leading axis of length M.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtri

from . import rng as _rng
from .errors import BasisError, DimensionError, PositivityError, QuadratureError, SizeError, FactorizationError
from .fields import Field, combine, exact_number
from .linalg import psd_root


# --------------------------------------------------------------------------
# Base measure spaces


@dataclass(frozen=True)
class Projection:
    """Coefficients (f, xi_n), the squared norm int f^2 dmu, and quadrature stderr."""

    coef: np.ndarray
    norm_sq: float
    stderr: float = 0.0

    @property
    def defect(self) -> float:
        return self.norm_sq - float(self.coef @ self.coef)


class BaseMeasureSpace:
    """Bounded positive measure ``mu`` on R^dim with N orthonormal basis functions."""

    kind = "abstract"
    gram_tol = 1e-12

    def __init__(self, dim: int, mass: float, N: int, label: str):
        if not mass > 0 or not np.isfinite(mass):
            raise BasisError("mu must have finite positive total mass")
        self.dim = dim
        self.mass = float(mass)
        self.N = int(N)
        self.label = label

    def __repr__(self):
        return f"{type(self).__name__}({self.label}, N={self.N})"

    # subclasses provide nodes/weights and either a dense basis matrix or cells
    nodes: np.ndarray
    weights: np.ndarray

    def project(self, f) -> Projection:
        raise NotImplementedError

    def dot(self, a, b) -> float:
        """int a b dmu."""
        a, b = Field.from_any(a, self.dim), Field.from_any(b, self.dim)
        return float(np.sum(self.weights * a.at(self.nodes) * b.at(self.nodes)))

    def gram(self) -> np.ndarray:
        raise NotImplementedError

    @cached_property
    def gram_error(self) -> float:
        return float(np.abs(self.gram() - np.eye(self.N)).max())

    def check(self):
        if self.gram_error > self.gram_tol:
            raise BasisError(f"Gram matrix deviates from identity by {self.gram_error:.2e}")
        return self


class DenseSpace(BaseMeasureSpace):
    """Basis tabulated on deterministic quadrature nodes (Haar, Gauss-Hermite)."""

    def __init__(self, dim, mass, nodes, weights, basis_at_nodes, label):
        super().__init__(dim, mass, basis_at_nodes.shape[0], label)
        self.nodes = nodes
        self.weights = weights
        self.B = basis_at_nodes  # (N, Q)
        self._BW = basis_at_nodes * weights

    def project(self, f) -> Projection:
        f = Field.from_any(f, self.dim)
        v = f.at(self.nodes)
        return Projection(self._BW @ v, float(self.weights @ (v * v)))

    def gram(self):
        return self._BW @ self.B.T


class HaarSpace(DenseSpace):
    """Uniform measure on [0,1] (times ``mass``) with the Haar basis of 2^levels functions.

    Quadrature: Gauss-Legendre on each of 2^(levels+refine) dyadic cells, exact
    for the basis and for piecewise polynomials on those cells.
    """

    kind = "haar"

    def __init__(self, levels: int = 6, points: int = 4, refine: int = 2, mass: float = 1.0):
        cells = 2 ** (levels + refine)
        x, w = leggauss(points)
        left = np.arange(cells) / cells
        nodes = (left[:, None] + (x[None, :] + 1) / (2 * cells)).ravel()
        weights = np.tile(w / (2 * cells), cells) * mass
        B = haar_basis(nodes, levels) / np.sqrt(mass)
        super().__init__(1, mass, nodes[:, None], weights, B, f"haar(levels={levels})")
        self.levels = levels


def haar_basis(t: np.ndarray, levels: int) -> np.ndarray:
    """Orthonormal Haar functions on [0,1]: constant first, then level by level."""
    rows = [np.ones_like(t)]
    for j in range(levels):
        scaled = t * 2 ** j
        k = np.floor(scaled)
        frac = scaled - k
        for kk in range(2 ** j):
            inside = (k == kk)
            rows.append(np.where(inside, np.where(frac < 0.5, 1.0, -1.0), 0.0) * 2 ** (j / 2))
    return np.array(rows)


def hermite_indices(dim: int, degree: int) -> list[tuple[int, ...]]:
    """Multi-indices of total degree <= degree, graded then reverse-lexicographic."""
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            a = [0] * dim
            for i in combo:
                a[i] += 1
            out.append(tuple(a))
    return out


def normalized_hermite_1d(x: np.ndarray, degree: int) -> np.ndarray:
    """He_n(x)/sqrt(n!) for n = 0..degree, shape (degree+1, len(x))."""
    H = np.empty((degree + 1,) + x.shape)
    H[0] = 1.0
    if degree >= 1:
        H[1] = x
    for n in range(1, degree):
        H[n + 1] = (x * H[n] - np.sqrt(n) * H[n - 1]) / np.sqrt(n + 1)
    return H


class HermiteSpace(BaseMeasureSpace):
    """Standard Gaussian measure on R^dim with normalized Hermite products (Wiener chaos basis).

    Polynomial integrands are projected in closed form.  Others use tensor
    Gauss-Hermite quadrature when ``dim <= 3`` and Monte Carlo otherwise
    (raising :class:`QuadratureError` above the stderr budget).
    """

    kind = "hermite"

    def __init__(self, dim: int, degree: int, cap: int | None = None, quad_points: int | None = None,
                 mc_samples: int = 10 ** 6, mc_seed: int = 0, stderr_budget: float = 1e-3):
        self.indices = hermite_indices(dim, degree)
        if cap is not None and len(self.indices) > cap:
            raise SizeError(f"{len(self.indices)} chaos elements exceed the cap of {cap}")
        super().__init__(dim, 1.0, len(self.indices), f"hermite(dim={dim}, degree={degree})")
        self.degree = degree
        self.position = {a: i for i, a in enumerate(self.indices)}
        self.quad_points = quad_points or {1: max(160, degree + 8), 2: max(64, degree + 8),
                                           3: max(24, degree + 4)}.get(dim)
        self.mc_samples = mc_samples
        self.mc_seed = mc_seed
        self.stderr_budget = stderr_budget

    @cached_property
    def _quad(self):
        if self.quad_points is None:
            pts = _rng.sample_points(lambda g, n: g.standard_normal((n, self.dim)), self.mc_samples, self.mc_seed)
            w = np.full(len(pts), 1.0 / len(pts))
            return pts, w, False
        x, w = hermegauss(self.quad_points)
        w = w / w.sum()
        grids = np.meshgrid(*([x] * self.dim), indexing="ij")
        wgrids = np.meshgrid(*([w] * self.dim), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
        return nodes, weights, True

    @property
    def nodes(self):
        return self._quad[0]

    @property
    def weights(self):
        return self._quad[1]

    @cached_property
    def B(self) -> np.ndarray:
        nodes = self.nodes
        H = [normalized_hermite_1d(nodes[:, i], self.degree) for i in range(self.dim)]
        B = np.ones((self.N, len(nodes)))
        for r, a in enumerate(self.indices):
            for i, k in enumerate(a):
                if k:
                    B[r] *= H[i][k]
        return B

    def project(self, f) -> Projection:
        f = Field.from_any(f, self.dim)
        if f.poly is not None and f.poly.dim == self.dim:
            exp = f.poly.hermite_expansion()
            coef = np.zeros(self.N)
            for a, c in exp.items():
                j = self.position.get(a)
                if j is not None:
                    coef[j] = c
            return Projection(coef, float(sum(c * c for c in exp.values())))
        if f.const is not None:
            return self.project(Field.constant(f.const, self.dim))
        nodes, w, exact = self._quad
        v = f.at(nodes)
        coef = self.B @ (w * v)
        norm_sq = float(w @ (v * v))
        stderr = 0.0
        if not exact:
            n = len(v)
            stderr = float(np.sqrt(((self.B * v) ** 2).mean(axis=1) - coef ** 2).max() / np.sqrt(n))
            if stderr > self.stderr_budget * max(np.sqrt(norm_sq), 1e-300):
                raise QuadratureError(f"Monte Carlo inner products have stderr {stderr:.2e} "
                                      f"> {self.stderr_budget:g} * |f|")
        return Projection(coef, norm_sq, stderr)

    def dot(self, a, b) -> float:
        a, b = Field.from_any(a, self.dim), Field.from_any(b, self.dim)
        if a.poly is not None and b.poly is not None:
            return (a.poly * b.poly).gaussian_mean()
        return super().dot(a, b)

    def gram(self):
        if self.quad_points is None:
            return np.eye(self.N)  # closed form: normalized Hermite products are orthonormal
        return (self.B * self.weights) @ self.B.T


class CellSpace(BaseMeasureSpace):
    """Indicator-refinement basis: normalized indicators of product cells of equal mass.

    The measure is a product of ``dim`` copies of a one-dimensional law given
    by its quantile function; cells are ``bins`` equal-mass intervals per axis.
    Integrals over a cell use Gauss-Legendre in the probability scale.
    """

    kind = "cells"

    def __init__(self, dim: int, bins: int, quantile, points: int = 3, mass: float = 1.0, label: str = "cells"):
        super().__init__(dim, mass, bins ** dim, f"{label}(dim={dim}, bins={bins})")
        self.bins = bins
        x, w = leggauss(points)
        u = ((np.arange(bins)[:, None] + (x[None, :] + 1) / 2) / bins).ravel()  # (bins*points,)
        wu = np.tile(w / 2 / bins, bins)
        cell1 = np.repeat(np.arange(bins), points)
        q = quantile(u)
        grids = np.meshgrid(*([np.arange(len(u))] * dim), indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=1)
        self.nodes = q[idx]
        self.weights = np.prod(wu[idx], axis=1) * mass
        self.cell = np.ravel_multi_index(tuple(cell1[idx].T), (bins,) * dim)
        self.cell_mass = mass / self.N

    def project(self, f) -> Projection:
        f = Field.from_any(f, self.dim)
        v = f.at(self.nodes)
        coef = np.bincount(self.cell, weights=self.weights * v, minlength=self.N) / np.sqrt(self.cell_mass)
        return Projection(coef, float(self.weights @ (v * v)))

    def gram(self):
        masses = np.bincount(self.cell, weights=self.weights, minlength=self.N)
        return np.diag(masses / self.cell_mass)


class SampledCellSpace(BaseMeasureSpace):
    """Indicator-refinement basis for a measure known only through a sampler.

    ``mu`` is replaced by the empirical measure of ``n`` draws scaled to
    ``mass``; cells are empirical-quantile bins per axis.  Projections are exact
    for the empirical measure and carry a Monte Carlo stderr w.r.t. ``mu``.
    """

    kind = "sampled"
    gram_tol = 1e-3

    def __init__(self, sampler, dim: int, mass: float, n: int, bins: int, seed: int):
        pts = _rng.sample_points(sampler, n, seed).reshape(n, dim)
        edges = [np.quantile(pts[:, i], np.linspace(0, 1, bins + 1)[1:-1]) for i in range(dim)]
        cell_axes = [np.searchsorted(edges[i], pts[:, i], side="right") for i in range(dim)]
        cell = np.ravel_multi_index(tuple(cell_axes), (bins,) * dim)
        occupied, self.cell = np.unique(cell, return_inverse=True)
        super().__init__(dim, mass, len(occupied), f"sampled_cells(dim={dim}, bins={bins}, n={n})")
        self.nodes = pts
        self.weights = np.full(n, mass / n)
        self.cell_mass = np.bincount(self.cell, weights=self.weights, minlength=self.N)

    def project(self, f) -> Projection:
        f = Field.from_any(f, self.dim)
        v = f.at(self.nodes)
        s = np.bincount(self.cell, weights=self.weights * v, minlength=self.N)
        coef = s / np.sqrt(self.cell_mass)
        n = len(v)
        # stderr of a cell integral against the true measure, per coefficient
        s2 = np.bincount(self.cell, weights=self.weights * v * v, minlength=self.N)
        var = np.maximum(s2 / self.cell_mass - (s / self.cell_mass) ** 2, 0.0)
        stderr = float(np.sqrt(var.max() / n * self.mass)) if n > 1 else 0.0
        return Projection(coef, float(self.weights @ (v * v)), stderr)

    def gram(self):
        return np.eye(self.N)


def haar_space(levels: int = 6, **kw) -> HaarSpace:
    return HaarSpace(levels, **kw).check()


def hermite_space(dim: int, degree: int, **kw) -> HermiteSpace:
    return HermiteSpace(dim, degree, **kw).check()


def gaussian_cells_space(dim: int, bins: int, points: int = 3) -> CellSpace:
    return CellSpace(dim, bins, ndtri, points, label="gaussian_cells").check()


def uniform_cells_space(dim: int, bins: int, points: int = 3, mass: float = 1.0) -> CellSpace:
    return CellSpace(dim, bins, lambda u: u, points, mass, label="uniform_cells").check()


def sampled_cells_space(sampler, dim: int, mass: float, n: int, bins: int, seed: int) -> SampledCellSpace:
    return SampledCellSpace(sampler, dim, mass, n, bins, seed).check()


# --------------------------------------------------------------------------
# White noises


def _identity_psi(K: int, dim: int):
    return [[Field.constant(1.0, dim) if i == k else None for k in range(K)] for i in range(K)]


class WhiteNoise:
    """p outputs built from K independent scalar noises on ``space``."""

    def __init__(self, space: BaseMeasureSpace, K: int, seed: int, size: int | None, psi, density: sp.Matrix,
                 stream: _rng.NormalStream | None = None):
        self.space = space
        self.K = int(K)
        self.seed = int(seed)
        self.size = size
        self.psi = psi  # p lists of K fields (None = zero)
        self.density = density  # exact p x p density of the associated measure against mu
        self.stream = stream or _rng.NormalStream(seed, (self.K, space.N), size)

    @property
    def p(self) -> int:
        return len(self.psi)

    @property
    def g(self) -> np.ndarray:
        """The Gaussian coefficients, shape (K, N) or (size, K, N)."""
        return self.stream.array()

    def coefficients(self, f) -> np.ndarray:
        """C[i, k, n] = (f * psi[i][k], xi_n); the noise is sum_{k,n} g[k,n] C[i,k,n]."""
        return self.projections(f)[0]

    def projections(self, f):
        f = Field.from_any(f, self.space.dim)
        C = np.zeros((self.p, self.K, self.space.N))
        norms = np.zeros((self.p, self.K))
        stderr = 0.0
        for i, row in enumerate(self.psi):
            for k, w in enumerate(row):
                if w is None:
                    continue
                pr = self.space.project(f * w)
                C[i, k] = pr.coef
                norms[i, k] = pr.norm_sq
                stderr = max(stderr, pr.stderr)
        return C, norms, stderr

    def evaluate(self, f) -> np.ndarray:
        """Realizations of all outputs on f: shape (p,) or (size, p)."""
        return self.stream.contract(self.coefficients(f))

    def covariance(self, f, h=None) -> np.ndarray:
        """Exact p x p covariance of (outputs on f, outputs on h) for the truncated noise."""
        Cf = self.coefficients(f).reshape(self.p, -1)
        Ch = Cf if h is None else self.coefficients(h).reshape(self.p, -1)
        return Cf @ Ch.T

    def target_covariance(self, f, h=None) -> np.ndarray:
        """p x p matrix int f h (density_ij) dmu computed from the weight fields."""
        f = Field.from_any(f, self.space.dim)
        h = f if h is None else Field.from_any(h, self.space.dim)
        out = np.zeros((self.p, self.p))
        for i in range(self.p):
            for j in range(self.p):
                out[i, j] = sum(self.space.dot(f * a, h * b)
                                for a, b in zip(self.psi[i], self.psi[j]) if a is not None and b is not None)
        return out

    def truncation_defect(self, f) -> np.ndarray:
        """Per-output gap int f^2 density_ii dmu - truncated variance (>= 0 up to rounding)."""
        C, norms, _ = self.projections(f)
        return norms.sum(axis=1) - np.einsum("ikn,ikn->i", C, C)

    def density_at(self, X) -> np.ndarray:
        """Numeric associated density matrix at points X, shape (len(X), p, p)."""
        vals = np.array([[np.zeros(len(X)) if w is None else w.at(X) for w in row] for row in self.psi])
        return np.einsum("ikq,jkq->qij", vals, vals)


class ScalarWhiteNoise(WhiteNoise):
    def evaluate(self, f):
        out = super().evaluate(f)
        return out[..., 0] if self.size is not None else float(out[0])

    __call__ = evaluate

    def variance(self, f) -> float:
        return float(self.covariance(f)[0, 0])


class HValuedWhiteNoise(WhiteNoise):
    """nu(f) = sum_k nu_k(f) e_k in H = R^K."""

    __call__ = WhiteNoise.evaluate


class VectorWhiteNoise(WhiteNoise):
    """p-variate noise with matrix of measures rho * mu, mixed through a pointwise root of rho."""

    __call__ = WhiteNoise.evaluate


def sample_scalar_wn(space: BaseMeasureSpace, seed: int, size: int | None = None) -> ScalarWhiteNoise:
    space.check()
    return ScalarWhiteNoise(space, 1, seed, size, [[Field.constant(1.0, space.dim)]], sp.Matrix([[1]]))


def wn_eval(nu: WhiteNoise, f):
    return nu(f)


def sample_hvalued_wn(space: BaseMeasureSpace, K: int, seed: int, size: int | None = None) -> HValuedWhiteNoise:
    if K < 1:
        raise DimensionError("K must be >= 1")
    space.check()
    return HValuedWhiteNoise(space, K, seed, size, _identity_psi(K, space.dim), sp.eye(K))


def transform_multiply(nu: WhiteNoise, phi, name: str = "phi") -> WhiteNoise:
    """(phi nu)(f) = nu(f phi); associated measure phi^2 times the old one."""
    phi = Field.from_any(phi, nu.space.dim, name)
    psi = [[None if w is None else phi * w for w in row] for row in nu.psi]
    return type(nu)(nu.space, nu.K, nu.seed, nu.size, psi, nu.density * phi.sym ** 2, stream=nu.stream)


def transform_pair_field(nu: WhiteNoise, psi_fields, names=None) -> ScalarWhiteNoise:
    """(psi, nu) = sum_i nu_i(f psi_i) with associated density psi^T rho psi."""
    if len(psi_fields) != nu.p:
        raise DimensionError(f"field has {len(psi_fields)} components, noise has {nu.p}")
    names = names or [f"psi{i + 1}" for i in range(nu.p)]
    fields = [Field.from_any(f, nu.space.dim, n) for f, n in zip(psi_fields, names)]
    psi = [[combine(fields, [row[k] for row in nu.psi]) for k in range(nu.K)]]
    v = sp.Matrix([f.sym for f in fields])
    return ScalarWhiteNoise(nu.space, nu.K, nu.seed, nu.size, psi, v.T * nu.density * v, stream=nu.stream)


def transform_pair_vector(nu: WhiteNoise, x) -> ScalarWhiteNoise:
    """(x, nu) = sum_i x_i nu_i with associated measure x^T rho x mu."""
    x = np.asarray(x, dtype=float).ravel()
    if len(x) != nu.p:
        raise DimensionError(f"vector has length {len(x)}, noise has {nu.p} components")
    if not np.all(np.isfinite(x)):
        raise DimensionError("vector must be finite")
    return transform_pair_field(nu, [Field.constant(c, nu.space.dim) for c in x])


def sample_vector_wn(space: BaseMeasureSpace, density, p: int, seed: int, size: int | None = None,
                     method: str = "cholesky") -> VectorWhiteNoise:
    """p-variate white noise with matrix of measures ``rho(e) mu``.

    ``density`` is a constant p x p matrix or a callable mapping nodes (Q, dim)
    to (Q, p, p).  Outputs are ``nu_i(f) = sum_k nu_k(f L_ik)`` with L L^T = rho.
    """
    space.check()
    if callable(density):
        rho_nodes = np.asarray(density(space.nodes), dtype=float)
        sym = sp.Matrix(p, p, lambda i, j: sp.Symbol(f"rho{min(i, j) + 1}{max(i, j) + 1}"))
        const = None
    else:
        const = np.asarray(density, dtype=float).reshape(p, p)
        rho_nodes = np.broadcast_to(const, (len(space.nodes), p, p))
        sym = sp.Matrix(p, p, lambda i, j: exact_number(const[i, j]))
    if not np.allclose(rho_nodes, np.swapaxes(rho_nodes, 1, 2), atol=1e-12):
        raise PositivityError("density matrix must be symmetric")
    lam = np.linalg.eigvalsh(rho_nodes)
    scale = np.maximum(1.0, np.abs(lam).max(axis=1))
    if (lam[:, 0] < -1e-10 * scale).any():
        raise PositivityError(f"density fails PSD at {int((lam[:, 0] < -1e-10 * scale).sum())} checked points")
    if const is not None:
        try:
            L, _ = psd_root(const, method)
        except FactorizationError:
            L, _ = psd_root(const, "eigen")
        psi = [[Field.constant(L[i, k], space.dim) for k in range(p)] for i in range(p)]
    else:
        try:
            L_nodes, _ = psd_root(np.array(rho_nodes), method)
        except FactorizationError:
            L_nodes, _ = psd_root(np.array(rho_nodes), "eigen")
        nodes = space.nodes

        def entry(i, k):
            # the root is tabulated on the space's nodes only
            def fn(X):
                if X is not nodes:
                    raise ValueError("pointwise root of a variable density is only available on the space nodes")
                return L_nodes[:, i, k]
            return Field(fn, None, sp.Symbol(f"L{i + 1}{k + 1}"))

        psi = [[entry(i, k) for k in range(p)] for i in range(p)]
    return VectorWhiteNoise(space, p, seed, size, psi, sym)

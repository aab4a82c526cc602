"""D-gradients by pointwise square roots of Gamma, and measure-valued gradients.

``D[U](w) = M(w) grad U(w)`` with ``M^T M = gamma_field``; then
``|D[U]|^2 = Gamma[U]`` holds exactly and the chain rules follow from the
forward derivative rules.  The measure-valued gradient of X pairs the field
``DX`` with an H-valued white noise on (W, m):
``int f d_G X = sum_k nu_k(f (DX)_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp

from .errors import DimensionError, DomainError
from .expr import Functional, as_functional
from .fields import Field
from .linalg import check_psd, psd_root
from .structures import ErrorStructure
from .white_noise import HValuedWhiteNoise, ScalarWhiteNoise, transform_multiply, transform_pair_field


@dataclass
class DGradientOp:
    structure: ErrorStructure
    K: int
    method: str = "auto"
    constant_root: np.ndarray | None = field(default=None, repr=False)

    def root_field(self, points) -> np.ndarray:
        """M(w) of shape (n, K, dim) with M^T M = gamma_field(w)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.constant_root is not None:
            return np.broadcast_to(self.constant_root, (len(pts), self.K, self.structure.dim))
        G = self.structure.gamma_at(pts)
        check_psd(G)
        R, _ = psd_root(np.array(G), self.method)
        return _pad(np.swapaxes(R, -1, -2), self.K)

    def apply(self, U, points) -> np.ndarray:
        """D[U] at points, shape (n, K)."""
        U = self.structure.functional(U)
        if not U.smooth:
            raise DomainError(f"{U} is not C1")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.einsum("nkd,nd->nk", self.root_field(pts), U.grad(pts))

    def __call__(self, U, w):
        w = np.asarray(w, dtype=float)
        out = self.apply(U, w)
        return out[0] if w.ndim == 1 else out

    def component_fields(self, U) -> list[Field]:
        """(D U)_k as fields on W, polynomial when U is and Gamma is constant."""
        U = self.structure.functional(U)
        if not U.smooth:
            raise DomainError(f"{U} is not C1")
        polys = None
        if self.constant_root is not None:
            P = U.to_polynomial()
            if P is not None:
                grads = [P.diff(j) for j in range(self.structure.dim)]
                polys = []
                for k in range(self.K):
                    acc = grads[0] * float(self.constant_root[k, 0])
                    for j in range(1, self.structure.dim):
                        acc = acc + grads[j] * float(self.constant_root[k, j])
                    polys.append(acc)
        out = []
        for k in range(self.K):
            fn = (lambda X, k=k: self.apply(U, X)[:, k])
            out.append(Field(fn, None if polys is None else polys[k], sp.Symbol(f"D[{U}]_{k + 1}")))
        return out


def _pad(M, K):
    rows = M.shape[-2]
    if K < rows:
        raise DimensionError(f"K={K} is smaller than the root's {rows} rows")
    if K == rows:
        return M
    pad = np.zeros(M.shape[:-2] + (K - rows, M.shape[-1]))
    return np.concatenate([M, pad], axis=-2)


def build_dgradient(S: ErrorStructure, method: str = "auto", K: int | None = None) -> DGradientOp:
    """Constructive D-gradient with H = R^K (K defaults to dim; extra rows are zero)."""
    K = S.dim if K is None else int(K)
    const = None
    if S.constant_gamma is not None:
        check_psd(S.constant_gamma)
        R, _ = psd_root(np.array(S.constant_gamma), method)
        const = _pad(R.T.copy(), K)
        const.setflags(write=False)
    return DGradientOp(S, K, method, const)


def dgrad_apply(D: DGradientOp, F, U: Sequence, w) -> np.ndarray:
    """sum_i F'_i(U(w)) D[U_i](w), the chain rule for D."""
    U = [D.structure.functional(u) for u in U]
    F = as_functional(F, len(U))
    w = np.asarray(w, dtype=float)
    pts = np.atleast_2d(w)
    vals = np.stack([u(pts) for u in U], axis=1)
    dF = F.grad(vals)  # (n, d)
    out = sum(dF[:, [i]] * D.apply(u, pts) for i, u in enumerate(U))
    return out[0] if w.ndim == 1 else out


class MeasureValuedGradient:
    """d_G X for a functional or a vector of functionals, as scalar white noises on (W, m)."""

    def __init__(self, X, D: DGradientOp, nu: HValuedWhiteNoise):
        self.vector = isinstance(X, (list, tuple))
        self.X = [D.structure.functional(x) for x in (X if self.vector else [X])]
        self.D = D
        self.nu = nu
        self.components: list[ScalarWhiteNoise] = [
            transform_pair_field(nu, D.component_fields(x), names=[f"D[{x}]_{k + 1}" for k in range(D.K)])
            for x in self.X
        ]

    @property
    def size(self):
        return self.nu.size

    def __call__(self, f):
        """Realization(s) of int f d_G X; trailing axis of length d for vector X."""
        vals = [c(f) for c in self.components]
        if not self.vector:
            return vals[0]
        return np.stack(vals, axis=-1) if self.size is not None else np.array(vals)

    def variance(self, f) -> np.ndarray | float:
        """Exact variance (covariance matrix for vector X) of the truncated realization."""
        C = np.stack([c.coefficients(f)[0].ravel() for c in self.components])
        cov = C @ C.T
        return cov if self.vector else float(cov[0, 0])

    def target(self, f) -> np.ndarray | float:
        """int f^2 Gamma[X_i, X_j] dm on the noise's quadrature (or in closed form)."""
        fields = [c.psi[0] for c in self.components]
        space = self.nu.space
        f = Field.from_any(f, space.dim)
        d = len(fields)
        out = np.zeros((d, d))
        for i in range(d):
            for j in range(d):
                out[i, j] = sum(space.dot(f * a, f * b) for a, b in zip(fields[i], fields[j])
                                if a is not None and b is not None)
        return out if self.vector else float(out[0, 0])

    def truncation_defect(self, f):
        t, v = self.target(f), self.variance(f)
        return t - v


def mv_gradient(X, D: DGradientOp, nu: HValuedWhiteNoise) -> MeasureValuedGradient:
    if nu.K != D.K or nu.p != D.K:
        raise DimensionError(f"white noise has K={nu.K}, D-gradient has K={D.K}")
    if nu.space.dim != D.structure.dim:
        raise DimensionError("white noise must live on the structure's space (W, m)")
    return MeasureValuedGradient(X, D, nu)


def mvg_eval(dGX: MeasureValuedGradient, f):
    return dGX(f)


def mvg_density(dGX: MeasureValuedGradient):
    """Gamma[X] as a functional (matrix of functionals for vector X); needs constant Gamma."""
    S = dGX.D.structure
    if S.constant_gamma is None:
        raise ValueError("symbolic density needs a constant gamma_field; use gamma_matrix numerically")
    G = S.constant_gamma
    grads = [x.gradient() for x in dGX.X]

    def entry(a, b):
        acc = None
        for i in range(S.dim):
            for j in range(S.dim):
                if G[i, j] == 0:
                    continue
                term = grads[a][i] * grads[b][j] * float(G[i, j])
                acc = term if acc is None else acc + term
        return acc if acc is not None else Functional(0.0, S.dim)

    d = len(dGX.X)
    M = [[entry(a, b) for b in range(d)] for a in range(d)]
    return M if dGX.vector else M[0][0]


def pullback_multiply(dGX: MeasureValuedGradient, phi, name="phi") -> ScalarWhiteNoise:
    """phi . d_G X for scalar X (transformation a) applied to the measure-valued gradient)."""
    return transform_multiply(dGX.components[0], phi, name)


def chain_rule_check(D: DGradientOp, nu: HValuedWhiteNoise, F, X, test_functions) -> dict:
    """Compare d_G(F o X) with sum_i F'_i(X) d_G X_i on every test function.

    Returns the maximal absolute discrepancy over realizations and test
    functions; the identity holds at coefficient level, so it is pure rounding.
    """
    X = list(X) if isinstance(X, (list, tuple)) else [X]
    X = [D.structure.functional(x) for x in X]
    F = as_functional(F, len(X))
    FX = F.compose(X).with_dim(D.structure.dim)
    lhs = mv_gradient(FX, D, nu)
    parts = mv_gradient(X, D, nu).components
    weights = [Functional(F.diff(i + 1).compose(X).expr, D.structure.dim) for i in range(len(X))]
    rhs = [transform_multiply(parts[i], weights[i], name=f"dF{i + 1}(X)") for i in range(len(X))]
    worst = 0.0
    scale = 0.0
    for f in test_functions:
        a = np.asarray(lhs(f))
        b = sum(np.asarray(r(f)) for r in rhs)
        worst = max(worst, float(np.max(np.abs(a - b))))
        scale = max(scale, float(np.max(np.abs(a))))
    return {"discrepancy": worst, "scale": scale, "n_test_functions": len(test_functions)}

"""Image error structures, pushforward of measure-valued gradients, and the image calculus.

``S_X`` lives on R^d with law ``X_* m`` and ``Gamma_X[u](x) = E[Gamma[u o X] | X = x]``.
The conditional expectation is estimated from pushforward samples, by
equal-mass binning (d <= 2) or k nearest neighbours (d >= 3).  Binned
estimates can be evaluated either as the bin mean or with a within-bin
linear correction, which removes the first-order discretization bias when
the field is compared against quantities that vary inside a bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EstimatorError, ValidationError
from .expr import Functional, as_functional
from .fields import Field
from .linalg import psd_root
from .rng import derive_seed
from .mv_gradient import DGradientOp, MeasureValuedGradient, build_dgradient, mv_gradient
from .structures import ErrorStructure, gamma_matrix, gamma as gamma_fn
from .white_noise import HValuedWhiteNoise


# --------------------------------------------------------------------------
# Conditional expectation


@dataclass
class CondExpEstimator:
    kind: str = "auto"  # binning | knn | auto
    bins: int | None = None
    k: int | None = None

    def resolved(self, n: int, d: int) -> "CondExpEstimator":
        kind = self.kind if self.kind != "auto" else ("binning" if d <= 2 else "knn")
        bins = self.bins or math.ceil(n ** (1 / 3))
        k = self.k or math.ceil(math.sqrt(n))
        return CondExpEstimator(kind, bins, k)

    def fit(self, xs: np.ndarray, ys: np.ndarray):
        xs = np.asarray(xs, dtype=float).reshape(len(xs), -1)
        ys = np.asarray(ys, dtype=float).reshape(len(xs), -1)
        est = self.resolved(len(xs), xs.shape[1])
        if est.kind == "binning":
            return BinnedFit(xs, ys, est.bins)
        if est.kind == "knn":
            return KnnFit(xs, ys, est.k)
        raise ValidationError([f"unknown estimator kind {self.kind!r}"])


class BinnedFit:
    """Equal-mass bins per axis (product cells); statistics per occupied cell."""

    def __init__(self, xs, ys, bins):
        n, d = xs.shape
        self.n, self.d, self.bins = n, d, bins
        qs = np.linspace(0, 1, bins + 1)[1:-1]
        self.edges = [np.quantile(xs[:, i], qs) for i in range(d)]
        self.cell = self.locate(xs)
        occ, inv, counts = np.unique(self.cell, return_inverse=True, return_counts=True)
        self.occupied = occ
        self.index = {int(c): i for i, c in enumerate(occ)}
        m = len(occ)
        self.count = counts.astype(float)
        self.mass = self.count / n
        self.inv = inv
        sum_y = np.zeros((m, ys.shape[1]))
        np.add.at(sum_y, inv, ys)
        self.mean = sum_y / self.count[:, None]
        sq = np.zeros_like(sum_y)
        np.add.at(sq, inv, (ys - self.mean[inv]) ** 2)
        ddof = np.maximum(self.count - 1, 1)
        self.std = np.sqrt(sq / ddof[:, None])
        self.stderr = self.std / np.sqrt(self.count)[:, None]
        cx = np.zeros((m, d))
        np.add.at(cx, inv, xs)
        self.center = cx / self.count[:, None]
        self.lo = np.full((m, d), np.inf)
        self.hi = np.full((m, d), -np.inf)
        np.minimum.at(self.lo, inv, xs)
        np.maximum.at(self.hi, inv, xs)
        # within-bin least squares slope, y ~ mean + slope (x - center)
        dx = xs - self.center[inv]
        A = np.zeros((m, d, d))
        np.add.at(A, inv, dx[:, :, None] * dx[:, None, :])
        b = np.zeros((m, d, ys.shape[1]))
        np.add.at(b, inv, dx[:, :, None] * (ys - self.mean[inv])[:, None, :])
        self.slope = np.linalg.pinv(A, rcond=1e-10, hermitian=True) @ b  # (m, d, p)
        self.slope[self.count < d + 2] = 0.0
        edge_lo = np.array([np.unravel_index(c, (bins,) * d) for c in occ]).reshape(m, d)
        self.interior = np.all((edge_lo > 0) & (edge_lo < bins - 1), axis=1)

    def locate(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        axes = [np.searchsorted(self.edges[i], x[:, i], side="right") for i in range(self.d)]
        return np.ravel_multi_index(tuple(axes), (self.bins,) * self.d)

    def bin_of(self, x) -> np.ndarray:
        cells = self.locate(x)
        out = np.array([self.index.get(int(c), -1) for c in cells])
        if (out < 0).any():
            raise EstimatorError(f"{int((out < 0).sum())} evaluation points fall in empty bins")
        return out

    def predict(self, x, linear: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        b = self.bin_of(x)
        out = self.mean[b]
        if linear:
            dx = np.clip(x, self.lo[b], self.hi[b]) - self.center[b]
            out = out + np.einsum("nd,ndp->np", dx, self.slope[b])
        return out

    def grid(self):
        """Evaluation grid: occupied-bin centers and their X_* m masses."""
        return self.center, self.mass


class KnnFit:
    """k-nearest-neighbour average; the grid is a deterministic subsample of the data."""

    def __init__(self, xs, ys, k, grid_size: int = 512):
        self.xs, self.ys, self.k = xs, ys, min(k, len(xs))
        self.tree = cKDTree(xs)
        step = max(1, len(xs) // grid_size)
        self._grid = xs[::step][:grid_size]

    def _neighbours(self, x):
        _, idx = self.tree.query(np.asarray(x, dtype=float).reshape(-1, self.xs.shape[1]), k=self.k)
        return idx.reshape(len(idx), -1)

    def predict(self, x, linear: bool = False) -> np.ndarray:
        idx = self._neighbours(x)
        if idx.shape[1] == 0:
            raise EstimatorError("empty neighbourhood")
        return self.ys[idx].mean(axis=1)

    def stderr_at(self, x) -> np.ndarray:
        idx = self._neighbours(x)
        return self.ys[idx].std(axis=1, ddof=1) / np.sqrt(idx.shape[1])

    def grid(self):
        return self._grid, np.full(len(self._grid), 1.0 / len(self._grid))


# --------------------------------------------------------------------------
# Image structure


@dataclass
class ImageStructure:
    source: ErrorStructure
    X: list[Functional]
    w: np.ndarray = field(repr=False)  # source samples (n, dim)
    points: np.ndarray = field(repr=False)  # X(w), (n, d)
    gamma_samples: np.ndarray = field(repr=False)  # Gamma[X_i, X_j](w), (n, d, d)
    fit: object = field(repr=False)
    seed: int = 0

    @property
    def d(self) -> int:
        return len(self.X)

    @property
    def n(self) -> int:
        return len(self.points)

    def gammaX(self, x, linear: bool = True) -> np.ndarray:
        """Estimated Gamma_X[I_i, I_j](x), symmetric with eigenvalues clamped at 0."""
        G = self.fit.predict(x, linear=linear).reshape(-1, self.d, self.d)
        G = 0.5 * (G + np.swapaxes(G, 1, 2))
        lam, U = np.linalg.eigh(G)
        lam = np.maximum(lam, 0.0)
        return (U * lam[:, None, :]) @ np.swapaxes(U, 1, 2)

    def image_functional(self, F) -> Functional:
        return as_functional(F, self.d)

    def gamma_F(self, F, x, linear: bool = True) -> np.ndarray:
        """Gamma_X[F](x) = grad F^T Gamma_X[I] grad F by the functional calculus of S_X."""
        F = self.image_functional(F)
        g = F.grad(np.atleast_2d(x))
        return np.einsum("ni,nij,nj->n", g, self.gammaX(x, linear), g)

    def compose(self, F) -> Functional:
        """F o X as a functional on the source space."""
        F = self.image_functional(F)
        return F.compose(self.X).with_dim(self.source.dim)

    def direct_gamma_F(self, F) -> np.ndarray:
        """Samples of Gamma[F o X](w)."""
        return gamma_fn(self.source, self.compose(F), self.compose(F), self.w)

    def grid(self):
        return self.fit.grid()


def image_structure(S: ErrorStructure, X, estimator: CondExpEstimator | None = None,
                    n_samples: int = 10 ** 5, seed: int = 0) -> ImageStructure:
    """Pushforward samples of X and the regression of Gamma[X_i, X_j] on X."""
    if n_samples < 1000:
        raise ValidationError(["image_structure needs n_samples >= 1000"])
    X = [S.functional(x) for x in (X if isinstance(X, (list, tuple)) else [X])]
    w = S.sample(n_samples, seed)
    pts = np.stack([x(w) for x in X], axis=1)
    G = gamma_matrix(S, X, w)
    fit = (estimator or CondExpEstimator()).fit(pts, G.reshape(len(w), -1))
    return ImageStructure(S, X, w, pts, G, fit, seed)


def self_consistency(imageS: ImageStructure, h, seed: int | None = None, ref_factor: int = 10) -> dict:
    """Bin averages of h(X) against the same bins filled by an independent sample (binning only).

    Reports the mass-weighted L2 gap and the budget 2/sqrt(n_b) * local std.
    The reference sample is ``ref_factor`` times larger than the fit's.
    """
    fit = imageS.fit
    if not isinstance(fit, BinnedFit):
        raise ValidationError(["self-consistency check is defined for binning"])
    h = as_functional(h, imageS.d)
    est = BinnedFit(imageS.points, h(imageS.points)[:, None], fit.bins)
    seed = derive_seed(imageS.seed, "self-consistency") if seed is None else seed
    w2 = imageS.source.sample(ref_factor * imageS.n, seed)
    pts2 = np.stack([x(w2) for x in imageS.X], axis=1)
    cells = est.locate(pts2)
    keep = np.isin(cells, est.occupied)
    b2 = np.searchsorted(est.occupied, cells[keep])
    m = len(est.count)
    cnt2 = np.bincount(b2, minlength=m).astype(float)
    ref = np.bincount(b2, weights=h(pts2[keep]), minlength=m) / np.maximum(cnt2, 1)
    ok = cnt2 > 0
    gap = np.sqrt(np.sum(est.mass[ok] * (est.mean[ok, 0] - ref[ok]) ** 2))
    budget = np.sqrt(np.sum(est.mass * (2 * est.std[:, 0] / np.sqrt(est.count)) ** 2))
    return {"l2_error": float(gap), "budget": float(budget)}


# --------------------------------------------------------------------------
# Pushforward of measure-valued gradients


class PushforwardNoise:
    """d_G F = X_*(d_G(F o X)) as a white noise on R^d: int u d_G F = int (u o X) d_G(F o X)."""

    def __init__(self, dG_FX: MeasureValuedGradient, X: Sequence[Functional]):
        self.dG_FX = dG_FX
        self.X = list(X)

    def pullback(self, u) -> Field:
        dim = self.dG_FX.D.structure.dim
        if isinstance(u, (Functional, str)):
            u = as_functional(u, len(self.X))
            return Field.from_functional(u.compose(self.X).with_dim(dim))
        if isinstance(u, (int, float)):
            return Field.constant(float(u), dim)
        X = self.X
        return Field(lambda W: np.asarray(u(np.stack([x(W) for x in X], axis=1)), dtype=float), None,
                     Field.from_any(u, name="u").sym)

    def __call__(self, u):
        return self.dG_FX(self.pullback(u))

    def variance(self, u):
        return self.dG_FX.variance(self.pullback(u))

    def target(self, u):
        return self.dG_FX.target(self.pullback(u))


def image_mvg(dG_FX: MeasureValuedGradient, X) -> PushforwardNoise:
    X = X if isinstance(X, (list, tuple)) else [X]
    return PushforwardNoise(dG_FX, [dG_FX.D.structure.functional(x) for x in X])


def image_density_check(imageS: ImageStructure, F, sets, D: DGradientOp, nu: HValuedWhiteNoise) -> list[dict]:
    """Second moments of d_G F on indicator sets against int_A Gamma_X[F] dX_*m.

    ``sets`` are indicator functions on R^d (callables or expressions).  The
    target is estimated on the image structure's samples with the fitted
    Gamma_X; the empirical side uses the realizations held by ``nu``.
    """
    F = imageS.image_functional(F)
    FX = imageS.compose(F)
    dGF = image_mvg(mv_gradient(FX, D, nu), imageS.X)
    gF = imageS.gamma_F(F, imageS.points)
    out = []
    for A in sets:
        ind = _indicator_values(A, imageS.points)
        t_vals = ind * gF
        target = float(t_vals.mean())
        target_se = float(t_vals.std(ddof=1) / np.sqrt(len(t_vals)))
        vals = np.asarray(dGF(A))
        sq = vals ** 2
        emp = float(sq.mean())
        emp_se = float(sq.std(ddof=1) / np.sqrt(len(sq))) if sq.size > 1 else 0.0
        truncated = float(dGF.variance(A))
        quad = float(dGF.target(A))
        se = math.hypot(emp_se, target_se)
        defect = abs(quad - truncated)
        z = abs(emp - target) / se if se > 0 else (0.0 if emp == target else math.inf)
        out.append({"set": str(getattr(A, "__name__", A)), "empirical": emp, "empirical_se": emp_se,
                    "target": target, "target_se": target_se, "truncated_variance": truncated,
                    "truncation_defect": defect, "z": z})
    return out


def _indicator_values(A, pts):
    if isinstance(A, (Functional, str)):
        return as_functional(A, pts.shape[1])(pts)
    return np.asarray(A(pts), dtype=float)


# --------------------------------------------------------------------------
# Gradients on the image


@dataclass
class ImageGradient:
    """grad F as the representative of nabla_X F in L2(R^d, Gamma_X[I] . X_* m)."""

    F: Functional
    image: ImageStructure

    def __call__(self, x) -> np.ndarray:
        return self.F.grad(np.atleast_2d(x))

    def components(self) -> list[Functional]:
        return self.F.gradient()

    def quadratic(self, x, linear: bool = True) -> np.ndarray:
        """(nabla_X F)^T Gamma_X[I] (nabla_X F) at x."""
        return self.image.gamma_F(self.F, x, linear)

    def norm(self, other: "ImageGradient | None" = None) -> float:
        """L2(Gamma_X[I] X_* m) norm of self - other, on the pushforward samples."""
        pts = self.image.points
        v = self(pts) - (other(pts) if other is not None else 0.0)
        G = self.image.gammaX(pts)
        return float(np.sqrt(np.mean(np.einsum("ni,nij,nj->n", v, G, v))))

    def identity_check(self) -> dict:
        """Per-bin comparison of grad F^T Gamma_X[I] grad F with the direct E[Gamma[F o X] | X].

        Both sides are bin averages over the same samples; Gamma_X[I] is
        evaluated with the within-bin linear correction.
        """
        fit = self.image.fit
        if not isinstance(fit, BinnedFit):
            raise ValidationError(["identity check uses the binning estimator"])
        pts = self.image.points
        direct = self.image.direct_gamma_F(self.F)
        via = self.quadratic(pts, linear=True)
        diff = direct - via
        m = len(fit.count)
        inv = fit.inv
        mean_diff = np.bincount(inv, weights=diff, minlength=m) / fit.count
        mean_direct = np.bincount(inv, weights=direct, minlength=m) / fit.count
        sq = np.bincount(inv, weights=(diff - mean_diff[inv]) ** 2, minlength=m)
        se = np.sqrt(sq / np.maximum(fit.count - 1, 1) / fit.count)
        return {"center": fit.center, "mass": fit.mass, "direct": mean_direct, "diff": mean_diff,
                "stderr": se}


def nabla_X(imageS: ImageStructure, F) -> ImageGradient:
    F = imageS.image_functional(F)
    if not F.smooth:
        raise ValidationError([f"{F} is not C1"])
    return ImageGradient(F, imageS)


def compose_nabla(imageS_X: ImageStructure, U: Sequence, imageS_UX: ImageStructure, V: Sequence,
                  n_points: int | None = None) -> dict:
    """Residual of (nabla_X(V o U))^T = (nabla_{U o X} V)^T o U . (nabla_X U)^T.

    Both sides are q x d Jacobian fields, evaluated at the pushforward points
    of X; the residual norm is taken in L2(R^d, Gamma_X[I] X_* m) row by row.
    """
    d = imageS_X.d
    U = [as_functional(u, d) for u in (U if isinstance(U, (list, tuple)) else [U])]
    p = len(U)
    if imageS_UX.d != p:
        raise ValidationError([f"image structure of U o X has dimension {imageS_UX.d}, U has {p} components"])
    V = [as_functional(v, p) for v in (V if isinstance(V, (list, tuple)) else [V])]
    VU = [v.compose(U).with_dim(d) for v in V]
    pts = imageS_X.points if n_points is None else imageS_X.points[:n_points]
    lhs = np.stack([f.grad(pts) for f in VU], axis=1)  # (n, q, d)
    upts = np.stack([u(pts) for u in U], axis=1)
    JV = np.stack([v.grad(upts) for v in V], axis=1)  # (n, q, p)
    JU = np.stack([u.grad(pts) for u in U], axis=1)  # (n, p, d)
    rhs = JV @ JU
    diff = lhs - rhs
    G = imageS_X.gammaX(pts)
    per_row = np.einsum("nqi,nij,nqj->nq", diff, G, diff)
    ref = np.einsum("nqi,nij,nqj->nq", lhs, G, lhs)
    return {"residual": float(np.sqrt(per_row.mean(axis=0).sum())),
            "scale": float(np.sqrt(ref.mean(axis=0).sum())),
            "max_abs": float(np.abs(diff).max()), "n_points": len(pts)}


def image_dirichlet_gradient(imageS: ImageStructure, F, sqrt_method: str = "auto"):
    """Field x -> D_X F(x) = (nabla_X F)^T M_X^T with M_X^T M_X = Gamma_X[I](x).

    Returns a callable giving (values (n, d), method used).
    """
    F = imageS.image_functional(F)

    def field(x):
        x = np.atleast_2d(x)
        G = imageS.gammaX(x)
        R, used = psd_root(G, sqrt_method)  # R R^T = G, so M_X = R^T
        g = F.grad(x)
        return np.einsum("ni,nij->nj", g, R), used

    return field


def corollary_check(imageS: ImageStructure, F, sqrt_method: str = "auto") -> dict:
    """|D_X F|^2 against Gamma_X[F] at the grid points."""
    centers, _ = imageS.grid()
    vals, used = image_dirichlet_gradient(imageS, F, sqrt_method)(centers)
    lhs = np.sum(vals ** 2, axis=1)
    rhs = imageS.gamma_F(F, centers)
    scale = np.maximum(1.0, np.abs(rhs))
    return {"max_rel_error": float(np.max(np.abs(lhs - rhs) / scale)), "method": used,
            "n_points": len(centers)}


# --------------------------------------------------------------------------
# Inequality (*)


def star_inequality_demo(S: ErrorStructure, X, F, n: int, seed: int, D: DGradientOp | None = None,
                         estimator: CondExpEstimator | None = None) -> dict:
    """|E[D[F o X] | X]|^2 (lhs) against E[|D[F o X]|^2 | X] = Gamma_X[F] (rhs), per bin.

    The gap rhs - lhs is the trace of the within-bin covariance of D[F o X]; it
    is >= 0 by construction and strictly positive when D[F o X] is not a
    function of X.
    """
    D = D or build_dgradient(S)
    img = image_structure(S, X, estimator or CondExpEstimator("binning"), n, seed)
    FX = img.compose(F)
    Dv = D.apply(FX, img.w)  # (n, K)
    fit = img.fit
    if not isinstance(fit, BinnedFit):
        raise ValidationError(["inequality demo uses the binning estimator"])
    inv, cnt, m = fit.inv, fit.count, len(fit.count)
    mean = np.zeros((m, Dv.shape[1]))
    np.add.at(mean, inv, Dv)
    mean /= cnt[:, None]
    sqn = np.sum(Dv ** 2, axis=1)
    rhs = np.bincount(inv, weights=sqn, minlength=m) / cnt
    lhs = np.sum(mean ** 2, axis=1)
    dev = np.sum((Dv - mean[inv]) ** 2, axis=1)  # per-sample contribution to the gap
    gap = np.bincount(inv, weights=dev, minlength=m) / cnt
    gap_sq = np.bincount(inv, weights=(dev - gap[inv]) ** 2, minlength=m)
    gap_se = np.sqrt(gap_sq / np.maximum(cnt - 1, 1) / cnt)
    rhs_sq = np.bincount(inv, weights=(sqn - rhs[inv]) ** 2, minlength=m)
    rhs_se = np.sqrt(rhs_sq / np.maximum(cnt - 1, 1) / cnt)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(gap_se > 0, gap / gap_se, np.where(gap > 0, np.inf, 0.0))
    return {"center": fit.center, "mass": fit.mass, "lhs": lhs, "rhs": rhs, "rhs_se": rhs_se,
            "gap": gap, "gap_se": gap_se, "z": z}


# --------------------------------------------------------------------------
# Approximating sequences


def taylor_sin(order: int, var: str = "x1") -> str:
    """Taylor polynomial of sin about 0 including powers up to ``order``."""
    terms = [f"{'-' if k % 2 else '+'}{var}^{2 * k + 1}/{math.factorial(2 * k + 1)}"
             for k in range((order + 1) // 2)]
    return "".join(terms).lstrip("+") or "0"


def taylor_exp(order: int, var: str = "x1") -> str:
    return "1" + "".join(f"+{var}^{k}/{math.factorial(k)}" for k in range(1, order + 1))


CAUCHY_CATALOG = {
    "sin": ("sin(x1)", taylor_sin),
    "exp_half": ("exp(x1/2)", lambda n: taylor_exp(n, "(x1/2)")),
    # in y = x^2 the plain sin series is not Cauchy under chi-square weights; the scaled one is
    "sin_eighth": ("sin(x1/8)", lambda n: taylor_sin(n, "(x1/8)")),
}


def cauchy_sequence(imageS: ImageStructure, approximants: Sequence, F, D: DGradientOp | None = None,
                    nu: HValuedWhiteNoise | None = None, u=1.0) -> dict:
    """Distances of a sequence F_n to its limit F in the image calculus.

    ``grad_dist[n]`` is ||grad F_n - grad F|| in L2(Gamma_X[I] X_* m) and
    ``noise_dist[n]`` the L2(P) distance between int u d_G F_n and int u d_G F,
    both in closed form from the truncated coefficients and on the realizations.
    """
    F = imageS.image_functional(F)
    lim = nabla_X(imageS, F)
    grad_dist, exact, empirical = [], [], []
    for Fn in approximants:
        Fn = imageS.image_functional(Fn)
        grad_dist.append(nabla_X(imageS, Fn).norm(lim))
        if D is not None and nu is not None:
            diff = imageS.compose(Fn - F)
            dG = image_mvg(mv_gradient(diff, D, nu), imageS.X)
            exact.append(math.sqrt(max(dG.variance(u), 0.0)))
            empirical.append(float(np.sqrt(np.mean(np.asarray(dG(u)) ** 2))))
    return {"grad_dist": grad_dist, "noise_dist": exact, "noise_dist_empirical": empirical}


def tower_check(imageS: ImageStructure, F, n: int | None = None, seed: int | None = None) -> dict:
    """int Gamma_X[F] dX_* m on the image samples against int Gamma[F o X] dm on a fresh sample."""
    F = imageS.image_functional(F)
    lhs_vals = imageS.gamma_F(F, imageS.points)
    seed = derive_seed(imageS.seed, "tower") if seed is None else seed
    w = imageS.source.sample(n or imageS.n, seed)
    FX = imageS.compose(F)
    rhs_vals = gamma_fn(imageS.source, FX, FX, w)
    lhs, rhs = float(lhs_vals.mean()), float(rhs_vals.mean())
    se = math.hypot(lhs_vals.std(ddof=1) / math.sqrt(len(lhs_vals)), rhs_vals.std(ddof=1) / math.sqrt(len(rhs_vals)))
    return {"image": lhs, "source": rhs, "stderr": se,
            "z": abs(lhs - rhs) / se if se > 0 else (0.0 if abs(lhs - rhs) < 1e-12 else math.inf)}

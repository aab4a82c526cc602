"""Square roots of positive semidefinite matrices, batched over leading axes.

``psd_root(A)`` returns ``R`` with ``R @ R.T == A``.  Callers that need a root
``M`` with ``M.T @ M == A`` take ``M = R.T``.
"""

from __future__ import annotations

import numpy as np

from .errors import FactorizationError

NEG_TOL = 1e-8
CLAMP = 1e-12


def check_psd(A, tol: float = NEG_TOL) -> np.ndarray:
    """Smallest eigenvalue per matrix, raising if below ``-tol * max(1, spectral norm)``."""
    A = np.asarray(A, dtype=float)
    lam = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))
    scale = np.maximum(1.0, np.abs(lam).max(axis=-1))
    if (lam[..., 0] < -tol * scale).any():
        raise FactorizationError(f"matrix is not positive semidefinite (min eigenvalue {lam[..., 0].min():.3g})")
    return lam[..., 0]


def eigen_root(A) -> np.ndarray:
    """Symmetric square root U diag(sqrt(lam)) U^T, eigenvalues below 1e-12 clamped to 0."""
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    lam, U = np.linalg.eigh(A)
    scale = np.maximum(1.0, np.abs(lam).max(axis=-1, keepdims=True))
    if (lam < -NEG_TOL * scale).any():
        raise FactorizationError(f"matrix is not positive semidefinite (min eigenvalue {lam.min():.3g})")
    lam = np.where(lam < CLAMP * scale, 0.0, lam)
    return (U * np.sqrt(lam)[..., None, :]) @ np.swapaxes(U, -1, -2)


def semidefinite_cholesky(A, tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular L with L L^T = A, tolerating zero pivots.

    A zero pivot on a PSD matrix forces the rest of its column to vanish; a
    non-vanishing remainder means the matrix is not PSD.
    """
    A = np.array(A, dtype=float)
    n = A.shape[-1]
    L = np.zeros_like(A)
    scale = max(1.0, float(np.abs(A).max()))
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if d > tol * scale:
            L[j, j] = np.sqrt(d)
            for i in range(j + 1, n):
                L[i, j] = (A[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
        else:
            if d < -NEG_TOL * scale:
                raise FactorizationError("matrix is not positive semidefinite")
            rest = A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]
            if np.abs(rest).max(initial=0.0) > np.sqrt(tol) * scale:
                raise FactorizationError("zero pivot with non-zero column")
    return L


def psd_root(A, method: str = "auto") -> tuple[np.ndarray, str]:
    """Root ``R`` (``R R^T = A``) of one matrix or a stack, plus the method used.

    method: ``auto`` (Cholesky, eigen fallback when not positive definite),
    ``cholesky`` (semidefinite-tolerant Cholesky), ``eigen``.
    """
    A = np.asarray(A, dtype=float)
    if method == "eigen":
        return eigen_root(A), "eigen"
    if method == "cholesky":
        if A.ndim == 2:
            return semidefinite_cholesky(A), "cholesky"
        flat = A.reshape(-1, *A.shape[-2:])
        return np.stack([semidefinite_cholesky(a) for a in flat]).reshape(A.shape), "cholesky"
    if method != "auto":
        raise ValueError(f"unknown factorization method {method!r}")
    try:
        return np.linalg.cholesky(A), "cholesky"
    except np.linalg.LinAlgError:
        pass
    if A.ndim == 2:
        return eigen_root(A), "eigen"
    # per-matrix fallback keeps Cholesky where it works
    flat = A.reshape(-1, *A.shape[-2:])
    out = np.empty_like(flat)
    used = set()
    for i, a in enumerate(flat):
        try:
            out[i] = np.linalg.cholesky(a)
            used.add("cholesky")
        except np.linalg.LinAlgError:
            out[i] = eigen_root(a)
            used.add("eigen")
    return out.reshape(A.shape), "+".join(sorted(used))

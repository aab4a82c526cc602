import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from errcalc.linalg import eigen_root, psd_root, semidefinite_cholesky
from errcalc.errors import FactorizationError
from errcalc.structures import (dirichlet_form, gamma, gamma_matrix, gaussian_aniso, gaussian_product,
                                generator_compose)


def test_gamma_examples():
    S = gaussian_product(2)
    w = np.array([[1.0, 2.0]])
    assert gamma(S, "x1*x2", "x1*x2", w)[0] == 5.0
    assert gamma(S, "x1", "x1", w)[0] == 1.0
    S1 = gaussian_product(1)
    assert gamma(S1, "sin(x1)", "x1^2", np.zeros((1, 1)))[0] == 0.0


def test_gamma_matrix_examples():
    S = gaussian_product(2)
    w = S.sample(5, 0)
    assert np.array_equal(gamma_matrix(S, ["x1", "x2"], w), np.broadcast_to(np.eye(2), (5, 2, 2)))
    assert gamma_matrix(gaussian_product(1), ["x1^2"], np.array([[1.0]]))[0, 0, 0] == 4.0
    G = gamma_matrix(S, ["x1+x2", "x1-x2"], w)
    assert np.allclose(G, np.broadcast_to(2 * np.eye(2), (5, 2, 2)))


@pytest.mark.parametrize("U,V,dim,target", [("x1", "x1", 1, 0.5), ("x1^2", "x1^2", 1, 2.0), ("x1", "x2", 2, 0.0)])
def test_dirichlet_form(U, V, dim, target):
    e = dirichlet_form(gaussian_product(dim), U, V, 100_000, 11)
    assert abs(e.value - target) <= 3 * e.stderr + 1e-15


def test_generator_examples():
    # A[x1] = -x1/2, Gamma = 1, f = t^2 at x1 = 1 against A[x1^2] = 1 - x1^2
    assert generator_compose(np.array([-0.5]), np.eye(1), "x1^2", np.array([1.0])) == pytest.approx(0.0)
    assert generator_compose(np.zeros(1), np.eye(1), "x1^2", np.array([0.7])) == pytest.approx(1.0)
    AX = np.array([0.3, -1.2])
    val = generator_compose(AX, np.eye(2), "2*x1-x2", np.array([0.1, 0.2]))
    assert val == pytest.approx(2 * 0.3 + 1.2)


def test_aniso_gamma_is_the_matrix():
    M = [[2.0, 1.0], [1.0, 2.0]]
    S = gaussian_aniso(2, M)
    w = S.sample(3, 0)
    assert np.allclose(gamma_matrix(S, ["x1", "x2"], w), np.broadcast_to(M, (3, 2, 2)))


exprs = st.sampled_from(["x1", "x1*x2", "sin(x1)+x2^2", "exp(x1/3)", "tanh(x1-x2)", "x1^3-x2"])


@given(exprs, exprs, exprs, st.floats(-3, 3), st.floats(-3, 3))
def test_gamma_bilinear_symmetric(u, v, z, a, b):
    S = gaussian_product(2)
    w = S.sample(50, 1)
    U, V, Z = S.functional(u), S.functional(v), S.functional(z)
    assert np.allclose(gamma(S, U, V, w), gamma(S, V, U, w), rtol=1e-14)
    lhs = gamma(S, U * a + V * b, Z, w)
    rhs = a * gamma(S, U, Z, w) + b * gamma(S, V, Z, w)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


@given(exprs, exprs)
def test_gamma_cauchy_schwarz(u, v):
    S = gaussian_aniso(2, [[2.0, 0.5], [0.5, 1.0]])
    w = S.sample(50, 2)
    assert np.all(gamma(S, u, v, w) ** 2 <= gamma(S, u, u, w) * gamma(S, v, v, w) + 1e-12)


# ---- square roots


def test_root_examples():
    R, m = psd_root(np.diag([4.0, 9.0]), "eigen")
    assert np.allclose(R, np.diag([2.0, 3.0]))
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    L, m = psd_root(A)
    assert m == "cholesky"
    assert np.abs(L @ L.T - A).max() <= 1e-12


def test_singular_falls_back_to_eigen():
    A = np.ones((2, 2))
    R, m = psd_root(A)
    assert m == "eigen"
    assert np.abs(R @ R.T - A).max() <= 1e-12
    L = semidefinite_cholesky(A)
    assert np.abs(L @ L.T - A).max() <= 1e-12


def test_indefinite_is_rejected():
    with pytest.raises(FactorizationError):
        eigen_root(np.array([[1.0, 2.0], [2.0, 1.0]]))


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10 ** 6))
def test_root_reproduces_random_psd(n, rank, seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, min(rank, n)))
    A = B @ B.T
    for method in ("auto", "eigen", "cholesky"):
        R, _ = psd_root(A, method)
        assert np.abs(R @ R.T - A).max() <= 1e-8 * max(1.0, np.abs(A).max())

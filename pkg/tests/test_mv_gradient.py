import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from errcalc.errors import DimensionError, DomainError
from errcalc.mv_gradient import build_dgradient, chain_rule_check, dgrad_apply, mv_gradient
from errcalc.structures import gamma, gaussian_aniso, gaussian_product
from errcalc.white_noise import gaussian_cells_space, hermite_space, sample_hvalued_wn


def test_roots():
    assert np.array_equal(build_dgradient(gaussian_product(2)).constant_root, np.eye(2))
    D = build_dgradient(gaussian_aniso(2, [[4.0, 0.0], [0.0, 9.0]]))
    assert np.allclose(D.constant_root, np.diag([2.0, 3.0]))
    G = np.array([[2.0, 1.0], [1.0, 2.0]])
    M = build_dgradient(gaussian_aniso(2, G)).constant_root
    assert np.abs(M.T @ M - G).max() <= 1e-12


def test_dgradient_examples():
    S = gaussian_product(2)
    D = build_dgradient(S)
    w = np.array([1.5, -0.5])
    assert np.array_equal(D("x1", w), [1.0, 0.0])
    assert np.allclose(dgrad_apply(D, "x1^3", ["x1"], w), [3 * 1.5 ** 2, 0.0])
    assert np.allclose(dgrad_apply(D, "x1*x2", ["x1", "x2"], w), [-0.5, 1.5])


def test_extra_rows_are_zero():
    D = build_dgradient(gaussian_product(2), K=4)
    v = D.apply("x1+x2", np.ones((3, 2)))
    assert np.array_equal(v[:, 2:], np.zeros((3, 2)))


def test_nonsmooth_rejected():
    D = build_dgradient(gaussian_product(1))
    with pytest.raises(DomainError):
        D.apply("ind(x1)", np.zeros((1, 1)))


@given(st.sampled_from(["x1*x2", "sin(x1)+x2^3", "exp(x1-x2)", "tanh(x1)*x2"]), st.integers(0, 1000))
def test_norm_axiom_on_aniso(expr, seed):
    S = gaussian_aniso(2, [[2.0, 0.7], [0.7, 1.0]])
    w = S.sample(20, seed)
    for method in ("cholesky", "eigen"):
        D = build_dgradient(S, method)
        assert np.allclose(np.sum(D.apply(expr, w) ** 2, axis=1), gamma(S, expr, expr, w), rtol=1e-12, atol=1e-12)


def test_mvg_examples():
    S = gaussian_product(2)
    D = build_dgradient(S)
    nu = sample_hvalued_wn(hermite_space(2, 4), 2, 3, 200)
    f = "tanh(x1)"
    assert np.array_equal(mv_gradient("x1", D, nu)(f), nu(f)[:, 0])
    assert np.all(np.asarray(mv_gradient("3", D, nu)(f)) == 0)
    s = np.asarray(mv_gradient("x1+x2", D, nu)(f))
    assert np.allclose(s, nu(f)[:, 0] + nu(f)[:, 1], atol=1e-13)


@pytest.mark.parametrize("X,f,target", [("x1", 1.0, 1.0), ("x1^2", 1.0, 4.0),
                                        ("x1^2", lambda X: (X[:, 0] > 0).astype(float), 2.0)])
def test_prop1_variance(X, f, target):
    S = gaussian_product(1)
    D = build_dgradient(S)
    nu = sample_hvalued_wn(gaussian_cells_space(1, 1024), 1, 17, 10_000)
    dG = mv_gradient(X, D, nu)
    sq = np.asarray(dG(f)) ** 2
    defect = abs(target - dG.variance(f))
    assert abs(sq.mean() - target) <= 3 * sq.std(ddof=1) / 100 + defect


def test_density_matrix_identity():
    S = gaussian_product(1)
    dG = mv_gradient(["x1", "x1^2"], build_dgradient(S), sample_hvalued_wn(hermite_space(1, 6), 1, 0))
    # Gamma[x1, x1^2] = 2 x1 integrates to zero
    C = dG.variance(1.0)
    assert np.allclose(C, [[1.0, 0.0], [0.0, 4.0]], atol=1e-12)


@pytest.mark.parametrize("F,X", [("x1^3", ["x1"]), ("x1+x2", ["x1", "x2"]), ("x1*x2", ["x1", "x2"])])
def test_chain_rule(F, X):
    dim = len(X)
    D = build_dgradient(gaussian_product(dim))
    nu = sample_hvalued_wn(hermite_space(dim, 6), dim, 1, 100)
    r = chain_rule_check(D, nu, F, X, [1.0, "sin(x1)"])
    assert r["discrepancy"] <= 1e-10 * max(1.0, r["scale"])


def test_dimension_mismatch():
    D = build_dgradient(gaussian_product(2))
    with pytest.raises(DimensionError):
        mv_gradient("x1", D, sample_hvalued_wn(hermite_space(2, 2), 1, 0))

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from errcalc import wiener as WI
from errcalc.fields import Field
from errcalc.errors import DomainError, SizeError, TruncationError
from errcalc.poly import Polynomial
from errcalc.structures import gamma

N_INC = 16


@pytest.fixture(scope="module")
def S():
    return WI.ou_structure(N_INC)


def test_stochastic_integral_examples(S):
    W = WI.TruncatedWienerSpace(N_INC)
    w = S.sample(4, 0)
    one = W.integral(np.ones(N_INC))
    assert np.allclose(gamma(S, one, one, w), 1.0, atol=1e-14)
    half = W.integral((np.arange(N_INC) < 8).astype(float))
    assert np.allclose(gamma(S, half, half, w), 0.5, atol=1e-14)
    other = W.integral((np.arange(N_INC) >= 8).astype(float))
    assert np.allclose(gamma(S, half, other, w), 0.0, atol=1e-14)
    # w(1) from the macro is the same functional as int 1 dw
    assert np.allclose(S.functional("w(1)")(w), one(w))


def test_brownian_path(S):
    W = WI.TruncatedWienerSpace(N_INC)
    x = S.sample(3, 1)
    assert np.allclose(W.path(x, [0.0]), 0.0)
    assert np.allclose(W.path(x, [1.0])[:, 0], x.sum(axis=1) / 4)
    with pytest.raises(DomainError):
        W.brownian(1.5)


@pytest.mark.parametrize("n", [4, 16, 6])
def test_rotation_is_orthogonal_with_constant_first_row(n):
    H = WI.rotation(n)
    assert np.abs(H @ H.T - np.eye(n)).max() <= 1e-12
    assert np.allclose(H[0], 1 / math.sqrt(n))


def test_first_rotated_coordinate_is_w1(S):
    x = S.sample(5, 2)
    H = WI.rotation(N_INC)
    assert np.allclose((x @ H.T)[:, 0], S.functional("w(1)")(x))


def test_sharp_examples(S):
    x = S.sample(10, 3)
    xh = S.sample(10, 4)
    w1 = S.functional("w(1)")
    assert np.allclose(WI.sharp("w(1)", N_INC)(x, xh), w1(xh))
    assert np.allclose(WI.sharp("w(1)^2", N_INC)(x, xh), 2 * w1(x) * w1(xh))
    assert np.all(WI.sharp("7", N_INC)(x, xh) == 0)


def test_sharp_second_moment(S):
    pts = S.sample(5, 5)
    r = WI.sharp("w(1)^2", N_INC).axiom_check(pts, 20_000, 6)
    assert np.allclose(r["target"], 4 * S.functional("w(1)")(pts) ** 2)
    assert np.all(r["z"] <= 4)


def test_chaos_degree_one():
    B = WI.chaos_basis(2, 1)
    assert B.N == 3
    # the span is {1, x1, x2}: every element has degree <= 1 and the Gram matrix is the identity
    assert all(B.element(r).degree <= 1 for r in range(B.N))
    assert B.orthonormality_error() <= 1e-14


def test_chaos_orthonormality_degree_three():
    assert WI.chaos_basis(4, 3).orthonormality_error() <= 1e-12


def test_hermite_two_normalization():
    Z = Polynomial.hermite((2,))
    assert (Z * Z).gaussian_mean() == pytest.approx(1.0, abs=1e-14)
    assert Z(np.array([[2.0]]))[0] == pytest.approx(3 / math.sqrt(2))


def test_default_bounds_fill_cap():
    bounds = WI.default_index_bounds(16, 3, 200)
    assert bounds == {0: 0, 1: 16, 2: 16, 3: 5}
    assert WI.chaos_basis(16, 3, 200).N == 188
    with pytest.raises(SizeError):
        WI.default_index_bounds(16, 1, 10)


def test_wiener_noise_examples():
    B = WI.chaos_basis(4, 2)
    nu = WI.wiener_hvalued_wn(B, 4, 7, 10_000)
    as_field = lambda P: Field(P, P)
    for Y in (as_field(B.element(1)), 1.0, as_field(B.element(6))):
        sq = np.asarray(nu(Y)) ** 2
        se = sq.std(axis=0, ddof=1) / 100
        assert np.all(np.abs(sq.mean(axis=0) - 1.0) <= 3 * se)
    one = np.asarray(nu(as_field(B.element(1))))
    assert np.allclose(one, nu.g[:, :, 1])


@pytest.mark.parametrize("X,Y,target", [("w(1)", "1", 1.0), ("w(1)", "w(1)", 1.0), ("w(1)^2", "1", 4.0)])
def test_variance_identity(X, Y, target):
    rep = WI.wiener_mvg_variance_check(X, Y, N_INC, realizations=4000, seed=1)
    assert rep.target == target
    assert rep.levels[-1].parseval == pytest.approx(target, abs=1e-10)
    assert rep.monotone
    assert abs(rep.empirical - target) <= 3 * rep.empirical_se


def test_monotone_levels():
    rep = WI.wiener_mvg_variance_check("w(0.5)*(w(1)-w(0.5))", "w(1)", N_INC, realizations=200)
    pars = [lv.parseval for lv in rep.levels]
    assert rep.monotone and pars[0] < pars[-1] <= rep.target + 1e-12


def test_truncation_budget_enforced():
    with pytest.raises(TruncationError):
        WI.wiener_mvg_variance_check("w(0.5)*(w(1)-w(0.5))", "1", N_INC, [(1, 1)], realizations=10)


def test_cross_construction_agrees():
    cc = WI.cross_construction("w(1)^2", "1", N_INC, realizations=4000, seed=2)
    assert abs(cc["empirical"] - 4.0) <= 3 * cc["empirical_se"] + abs(4.0 - cc["truncated_variance"])


@given(st.lists(st.floats(-2, 2), min_size=N_INC, max_size=N_INC))
def test_ito_isometry_for_steps(f):
    S = WI.ou_structure(N_INC)
    I = WI.TruncatedWienerSpace(N_INC).integral(np.array(f))
    assert gamma(S, I, I, np.zeros((1, N_INC)))[0] == pytest.approx(np.mean(np.square(f)), rel=1e-12, abs=1e-14)


@given(st.integers(2, 32))
def test_rotation_any_size(n):
    H = WI.rotation(n)
    assert np.abs(H @ H.T - np.eye(n)).max() <= 1e-12

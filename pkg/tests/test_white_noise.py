import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from errcalc.errors import DimensionError, PositivityError
from errcalc.fields import Field
from errcalc.white_noise import (gaussian_cells_space, haar_space, hermite_space, sample_hvalued_wn, sample_scalar_wn,
                                 sample_vector_wn, transform_multiply, transform_pair_field, transform_pair_vector)

M = 10_000
SPACE = haar_space(6)


def lo(X):
    return (X[:, 0] < 0.5).astype(float)


def hi(X):
    return (X[:, 0] >= 0.5).astype(float)


def var_ok(vals, target, z=3.0, defect=0.0):
    sq = np.asarray(vals) ** 2
    return abs(sq.mean() - target) <= z * sq.std(ddof=1) / np.sqrt(len(sq)) + defect


def test_haar_contains_constants():
    nu = sample_scalar_wn(SPACE, 0, M)
    assert SPACE.N == 64
    assert nu.variance(1.0) == pytest.approx(1.0, abs=1e-14)
    assert var_ok(nu(1.0), 1.0)


def test_dyadic_halves_are_orthogonal():
    nu = sample_scalar_wn(SPACE, 1, M)
    assert abs(nu.covariance(lo, hi)[0, 0]) <= 1e-14
    rho = np.corrcoef(nu(lo), nu(hi))[0, 1]
    assert abs(rho) <= 3 / np.sqrt(M)


def test_linearity_per_realization():
    # coefficients are linear; floating point leaves rounding of order 1e-15
    nu = sample_scalar_wn(SPACE, 2, M)
    combo = nu(lambda X: 2 * lo(X) + 3 * hi(X))
    assert np.max(np.abs(combo - 2 * nu(lo) - 3 * nu(hi))) <= 1e-12


def test_basis_element_returns_its_coefficient():
    nu = sample_scalar_wn(SPACE, 3, 100)
    xi1 = lambda X: np.ones(len(X))  # first Haar element is the constant
    assert np.allclose(nu(xi1), nu.g[:, 0, 0], atol=1e-14)


def test_hermite_basis_element_exact():
    space = hermite_space(1, 6)
    nu = sample_scalar_wn(space, 4, 50)
    vals = nu("x1")  # He_1 = x is the second normalized element
    assert np.allclose(vals, nu.g[:, 0, 1], atol=1e-12)
    # degree 7 is outside the span, so part of E[x^14] = 13!! is cut off
    assert 0 < nu.variance("x1^7") < 135135


def test_seed_reproducibility():
    a = sample_scalar_wn(SPACE, 9, 500)(lo)
    b = sample_scalar_wn(SPACE, 9, 500)(lo)
    c = sample_scalar_wn(SPACE, 10, 500)(lo)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_hvalued_examples():
    H1 = sample_hvalued_wn(SPACE, 1, 5, 200)
    S = sample_scalar_wn(SPACE, 5, 200)
    assert np.array_equal(H1(lo)[:, 0], S(lo))
    H = sample_hvalued_wn(SPACE, 2, 6, M)
    assert var_ok(H(lo) @ np.array([3.0, 4.0]), 25 * 0.5)
    e0 = transform_pair_vector(H, [1.0, 0.0])
    assert np.array_equal(e0(lo), H(lo)[:, 0])
    assert var_ok(e0(lo), 0.5)


def test_multiply_examples():
    nu = sample_scalar_wn(SPACE, 7, M)
    assert var_ok(transform_multiply(nu, 2.0)(lo), 4 * 0.5)
    assert np.array_equal(transform_multiply(nu, 1.0)(lo), nu(lo))
    half = transform_multiply(nu, lo, name="phi")
    assert var_ok(half(1.0), 0.5)
    assert half.density[0, 0] == sp.Symbol("phi") ** 2


def test_pair_vector_examples():
    H = sample_hvalued_wn(SPACE, 2, 8, M)
    zero = transform_pair_vector(H, [0.0, 0.0])
    assert np.all(zero(lo) == 0)
    v = transform_pair_vector(H, [3.0, 4.0])
    assert v.density[0, 0] == 25
    assert var_ok(v(1.0), 25.0)


def test_pair_field_examples():
    H = sample_hvalued_wn(SPACE, 2, 9, M)
    assert np.array_equal(transform_pair_field(H, [3.0, 4.0])(lo), transform_pair_vector(H, [3.0, 4.0])(lo))
    split = transform_pair_field(H, [lo, hi], names=["a", "b"])
    assert var_ok(split(1.0), 1.0)
    assert split.variance(1.0) == pytest.approx(1.0, abs=1e-12)
    H1 = sample_hvalued_wn(SPACE, 1, 10, 300)
    phi = lambda X: np.cos(X[:, 0])
    assert np.array_equal(transform_pair_field(H1, [phi])(lo), np.asarray(transform_multiply(H1, phi)(lo))[:, 0])


def test_pair_field_dimension_mismatch():
    H = sample_hvalued_wn(SPACE, 2, 0, 10)
    with pytest.raises(DimensionError):
        transform_pair_field(H, [1.0])


def test_vector_noise_examples():
    I2 = sample_vector_wn(SPACE, np.eye(2), 2, 11, M)(lo)
    prod = I2[:, 0] * I2[:, 1]
    assert abs(prod.mean()) <= 3 * prod.std(ddof=1) / np.sqrt(M)
    V = sample_vector_wn(SPACE, [[1.0, 1.0], [1.0, 1.0]], 2, 12, 500)
    v = V(lo)
    assert np.array_equal(v[:, 0], v[:, 1])
    z = transform_pair_vector(V, [1.0, -1.0])
    assert z.density[0, 0] == 0
    assert np.all(z(lo) == 0)


def test_vector_noise_rejects_indefinite():
    with pytest.raises(PositivityError):
        sample_vector_wn(SPACE, [[1.0, 2.0], [2.0, 1.0]], 2, 0, 10)


def test_normality():
    nu = sample_scalar_wn(SPACE, 13, M)
    v = nu(lambda X: X[:, 0] ** 2)
    assert stats.kstest(v / np.sqrt(nu.variance(lambda X: X[:, 0] ** 2)), "norm").pvalue > 0.001


def test_truncation_monotone_and_exact_in_span():
    sq = lambda X: X[:, 0] ** 2
    vals = [sample_scalar_wn(haar_space(L), 0).variance(sq) for L in range(1, 8)]
    assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= 0.2 and vals[-1] > 0.1999
    assert sample_scalar_wn(haar_space(1), 0).variance(lo) == pytest.approx(0.5, abs=1e-15)


def test_gaussian_cells_truncation_defect():
    space = gaussian_cells_space(1, 256)
    nu = sample_scalar_wn(space, 0)
    f = Field.from_any("x1^2", 1)
    assert 0 <= nu.truncation_defect(f)[0] < 0.05


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10 ** 6))
def test_linear_combination_of_pairings(a, b, seed):
    H = sample_hvalued_wn(SPACE, 2, seed, 64)
    v = transform_pair_vector(H, [a, b])(lo)
    assert np.allclose(v, a * H(lo)[:, 0] + b * H(lo)[:, 1], atol=1e-12)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_variance_is_measure_of_set(a, b):
    lo_, hi_ = min(a, b), max(a, b)
    f = lambda X: ((X[:, 0] >= lo_) & (X[:, 0] < hi_)).astype(float)
    v = sample_scalar_wn(haar_space(8), 0).variance(f)
    assert v <= hi_ - lo_ + 1e-12
    assert v >= hi_ - lo_ - 2 / 256  # two partially covered finest cells

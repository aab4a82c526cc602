import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from errcalc import image as IM
from errcalc.errors import EstimatorError, ValidationError
from errcalc.mv_gradient import build_dgradient, mv_gradient
from errcalc.structures import gaussian_product
from errcalc.white_noise import gaussian_cells_space, sample_hvalued_wn

N = 20_000
S1, S2 = gaussian_product(1), gaussian_product(2)

# int_{-1}^{1} 4 x^2 phi(x) dx, frozen from adaptive quadrature (scipy.integrate.quad)
PUSHFORWARD_ORACLE = 0.7949921723951969


@pytest.fixture(scope="module")
def img_sq():
    return IM.image_structure(S1, "x1^2", n_samples=N, seed=3)


def test_frozen_oracle_still_matches_quadrature():
    val = quad(lambda x: 4 * x * x * stats.norm.pdf(x), -1, 1)[0]
    assert val == pytest.approx(PUSHFORWARD_ORACLE, rel=1e-12)


def test_estimator_defaults():
    e = IM.CondExpEstimator().resolved(100_000, 1)
    assert (e.kind, e.bins) == ("binning", 47)
    e = IM.CondExpEstimator().resolved(10_000, 3)
    assert (e.kind, e.k) == ("knn", 100)


def test_too_few_samples():
    with pytest.raises(ValidationError):
        IM.image_structure(S1, "x1", n_samples=999)


def test_identity_and_coordinates():
    img = IM.image_structure(S1, "x1", n_samples=N, seed=0)
    c, _ = img.grid()
    assert np.allclose(img.gammaX(c)[:, 0, 0], 1.0)
    img2 = IM.image_structure(S2, ["x1", "x2"], n_samples=N, seed=0)
    c2, _ = img2.grid()
    assert np.allclose(img2.gammaX(c2), np.eye(2))


def test_gammaX_of_square(img_sq):
    fit = img_sq.fit
    c = fit.center[:, 0]
    assert np.all(np.abs(fit.mean[:, 0] - 4 * c) <= 3 * fit.stderr[:, 0] + 1e-12)
    assert np.allclose(img_sq.gammaX(c[:, None])[:, 0, 0], 4 * c, rtol=1e-9)


def test_empty_bin_raises():
    # the samples sit on the diagonal; off-diagonal product cells stay empty
    img = IM.image_structure(S2, ["x1", "x1"], n_samples=2000, seed=0)
    with pytest.raises(EstimatorError):
        img.gammaX(np.array([[2.0, -2.0]]))


def test_duplicate_coordinates_are_fine():
    img = IM.image_structure(S2, ["x1", "x1"], n_samples=N, seed=1)
    c, _ = img.grid()
    G = img.gammaX(c)
    assert np.allclose(G, np.ones((len(c), 2, 2)))


def test_image_gradient_examples(img_sq):
    g = IM.nabla_X(img_sq, "x1^2")
    x = np.array([[0.5], [2.0]])
    assert np.allclose(g(x)[:, 0], 2 * x[:, 0])
    assert np.allclose(IM.nabla_X(img_sq, "x1")(x), 1.0)
    r = g.identity_check()
    assert np.all(np.abs(r["diff"]) <= 3 * r["stderr"] + 1e-9 * np.abs(r["direct"]))
    # both sides also track 16 x^3 at the centers, up to within-bin spread
    c = r["center"][:, 0]
    inner = (c > 0.2) & (c < 3)
    assert np.allclose(r["direct"][inner], 16 * c[inner] ** 3, rtol=0.1)


def test_nonsmooth_image_functional(img_sq):
    with pytest.raises(ValidationError):
        IM.nabla_X(img_sq, "ind(x1-1)")


def test_pushforward_examples():
    D = build_dgradient(S1)
    nu = sample_hvalued_wn(gaussian_cells_space(1, 1024), 1, 5, 10_000)
    same = IM.image_mvg(mv_gradient("x1", D, nu), ["x1"])
    f = lambda P: np.tanh(P[:, 0])
    assert np.array_equal(same(f), mv_gradient("x1", D, nu)(f))
    sq = mv_gradient("x1^2", D, nu)
    pf = IM.image_mvg(sq, ["x1^2"])
    assert np.array_equal(pf(1.0), sq(1.0))
    u = lambda P: ((P[:, 0] >= 0) & (P[:, 0] < 1)).astype(float)
    vals = np.asarray(pf(u)) ** 2
    defect = abs(PUSHFORWARD_ORACLE - pf.variance(u))
    assert abs(vals.mean() - PUSHFORWARD_ORACLE) <= 3 * vals.std(ddof=1) / 100 + defect


def test_density_chi_square(img_sq):
    D = build_dgradient(S1)
    nu = sample_hvalued_wn(gaussian_cells_space(1, 512), 1, 6, 4000)
    sets = ["ind(1-x1)", "ind(x1-1)*ind(3-x1)"]
    for r, (a, b) in zip(IM.image_density_check(img_sq, "x1", sets, D, nu), [(0, 1), (1, 3)]):
        chi2 = quad(lambda y: 4 * y * stats.chi2.pdf(y, 1), a, b)[0]
        assert abs(r["target"] - chi2) <= 3 * r["target_se"]
        assert r["z"] <= 3 or abs(r["empirical"] - r["target"]) <= 3 * r["empirical_se"] + r["truncation_defect"]


def test_constant_image_functional_is_zero(img_sq):
    D = build_dgradient(S1)
    nu = sample_hvalued_wn(gaussian_cells_space(1, 64), 1, 0, 50)
    r = IM.image_density_check(img_sq, "2", ["ind(x1)"], D, nu)[0]
    assert r["empirical"] == 0 and r["target"] == 0


def test_compose_examples():
    img = IM.image_structure(S1, "x1", n_samples=N, seed=2)
    imgU = IM.image_structure(S1, "x1^2", n_samples=2000, seed=2)
    r = IM.compose_nabla(img, ["x1^2"], imgU, ["x1^3"], n_points=1000)
    assert r["residual"] <= 1e-10 * max(1, r["scale"])
    r = IM.compose_nabla(img, ["sin(x1)"], IM.image_structure(S1, "sin(x1)", n_samples=2000), ["x1"])
    assert r["residual"] == 0
    img2 = IM.image_structure(S2, ["x1", "x2"], n_samples=N, seed=2)
    imgU2 = IM.image_structure(S2, ["x1+x2", "x1*x2"], n_samples=2000, seed=2)
    r = IM.compose_nabla(img2, ["x1+x2", "x1*x2"], imgU2, ["x1*x2"], n_points=1000)
    assert r["residual"] <= 1e-8 * max(1, r["scale"])


def test_compose_dimension_check():
    img = IM.image_structure(S1, "x1", n_samples=2000)
    with pytest.raises(ValidationError):
        IM.compose_nabla(img, ["x1", "x1^2"], img, ["x1"])


def test_corollary_examples(img_sq):
    c, _ = img_sq.grid()
    vals, used = IM.image_dirichlet_gradient(img_sq, "x1")(c)
    assert used == "cholesky"
    assert np.allclose(vals[:, 0], 2 * np.sqrt(c[:, 0]), rtol=1e-8)
    img = IM.image_structure(S2, ["x1", "x2"], n_samples=N, seed=4)
    cc, _ = img.grid()
    v, _ = IM.image_dirichlet_gradient(img, "x1*x2")(cc)
    assert np.allclose(v, cc[:, ::-1], atol=1e-12)
    sing = IM.image_structure(S2, ["x1", "x1"], n_samples=N, seed=4)
    r = IM.corollary_check(sing, "x1+2*x2")
    assert r["method"] != "cholesky"
    assert r["max_rel_error"] <= 1e-8


def test_star_examples():
    est = IM.CondExpEstimator("binning")
    r = IM.star_inequality_demo(S1, "x1^2", "x1", N, 0, estimator=est)
    sel = r["center"][:, 0] >= 0.5
    assert np.all(r["z"][sel] > 5)
    assert np.all(r["lhs"] <= r["rhs"] + 3 * r["rhs_se"] + 1e-12)
    r = IM.star_inequality_demo(S1, "x1", "x1", N, 0, estimator=est)
    assert np.all(np.abs(r["gap"]) <= 3 * r["gap_se"] + 1e-12)
    assert np.allclose(r["lhs"], 1.0) and np.allclose(r["rhs"], 1.0)
    r = IM.star_inequality_demo(S1, "x1^2", "5", N, 0, estimator=est)
    assert np.all(r["lhs"] == 0) and np.all(r["rhs"] == 0)


def test_cauchy_sequence_converges():
    img = IM.image_structure(S1, "x1", n_samples=N, seed=7)
    F, make = IM.CAUCHY_CATALOG["sin"]
    r = IM.cauchy_sequence(img, [make(k) for k in range(1, 16, 2)], F)
    d = r["grad_dist"]
    assert all(b < a for a, b in zip(d[4:], d[5:]))
    assert d[-1] < 1e-3 * d[0]


def test_tower_and_self_consistency(img_sq):
    t = IM.tower_check(img_sq, "sin(x1)")
    assert t["z"] <= 3
    s = IM.self_consistency(img_sq, "sin(x1)")
    assert s["l2_error"] <= s["budget"]


def test_knn_estimator_runs_in_three_dims():
    S3 = gaussian_product(3)
    img = IM.image_structure(S3, ["x1", "x2", "x1*x3"], n_samples=4000, seed=0)
    assert isinstance(img.fit, IM.KnnFit)
    G = img.gammaX(np.zeros((1, 3)))
    assert np.all(np.linalg.eigvalsh(G) >= -1e-12)
    assert G[0, 0, 0] == pytest.approx(1.0)


@given(st.integers(1, 3), st.floats(-2, 2), st.integers(0, 1000))
def test_binned_fit_reproduces_functions_of_x(power, shift, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2000, 1))
    y = (x[:, 0] + shift) ** power
    fit = IM.BinnedFit(x, y[:, None], 10)
    # bin means of a function of x equal the per-bin averages exactly
    for b in range(len(fit.count)):
        assert fit.mean[b, 0] == pytest.approx(y[fit.inv == b].mean(), rel=1e-12, abs=1e-12)
    assert math.isclose(fit.mass.sum(), 1.0)


@given(st.floats(0.2, 5.0))
def test_gammaX_clamps_to_psd(scale):
    img = IM.image_structure(S2, ["x1", f"{scale}*x1+x2"], n_samples=2000, seed=1)
    c, _ = img.grid()
    assert np.all(np.linalg.eigvalsh(img.gammaX(c)) >= -1e-12)

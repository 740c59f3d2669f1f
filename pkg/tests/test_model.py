import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recregion.errors import InvalidConfig
from recregion.harness import ExperimentConfig, ergodic_report
from recregion.model import (
    GaussianAR1Model,
    ParameterBox,
    gaussian_iid,
    make_rng,
    path_from_noise,
    quadrature_expected_log_density,
)

from oracles import fd_hessian, fd_score, random_points

BOX = ParameterBox((-5.0, 0.3), (5.0, 3.0))


def ar1(rho, box=BOX):
    return GaussianAR1Model(rho, box)


# --- construction ---------------------------------------------------------


def test_box_validation():
    with pytest.raises(InvalidConfig):
        ParameterBox((0.0, 1.0), (0.0, 2.0))
    with pytest.raises(InvalidConfig):
        ParameterBox((0.0,), (1.0, 2.0))
    with pytest.raises(InvalidConfig):
        ParameterBox((0.0, 0.0), (1.0, math.inf))


def test_box_helpers():
    assert np.array_equal(BOX.midpoint, [0.0, 1.65])
    assert BOX.contains([5.0, 0.3])
    assert not BOX.contains([5.1, 1.0])
    np.testing.assert_array_equal(BOX.clip([[9.0, 0.0], [-9.0, 9.0]]), [[5.0, 0.3], [-5.0, 3.0]])


@pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
def test_rho_must_be_inside_unit_interval(rho):
    with pytest.raises(InvalidConfig):
        ar1(rho)


def test_sigma_lower_bound_positive():
    with pytest.raises(InvalidConfig):
        ar1(0.0, ParameterBox((-1.0, 0.0), (1.0, 2.0)))


def test_gaussian_iid_is_rho_zero():
    assert gaussian_iid(BOX).rho == 0.0


# --- density ----------------------------------------------------------------


def test_log_density_examples():
    assert ar1(0.0).log_transition_density([0.0, 1.0], 7.0, 0.0) == pytest.approx(-0.9189385332046727, abs=1e-13)
    expected = -0.5 * math.log(2 * math.pi) - 0.5 * math.log(0.75)
    assert ar1(0.5).log_transition_density([0.0, 1.0], 2.0, 1.0) == pytest.approx(expected, abs=1e-14)
    assert expected == pytest.approx(-0.7750975, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.floats(-4, 4), st.floats(0.3, 3), st.floats(-10, 10))
def test_iid_density_symmetric_about_mean(mu, sigma, y):
    m = ar1(0.0)
    a = m.log_transition_density([mu, sigma], 0.0, y)
    b = m.log_transition_density([mu, sigma], 0.0, 2 * mu - y)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_density_matches_scipy_normal():
    from scipy import stats

    m = ar1(0.3)
    theta, x, y = np.array([0.7, 1.4]), 0.2, -1.1
    mean = 0.3 * x + 0.7 * 0.7
    sd = 1.4 * math.sqrt(1 - 0.09)
    assert m.log_transition_density(theta, x, y) == pytest.approx(stats.norm.logpdf(y, mean, sd), rel=1e-13)


@pytest.mark.parametrize("rho", [-0.6, 0.0, 0.5, 0.9])
def test_density_normalises(rho):
    m = ar1(rho)
    nodes, weights = np.polynomial.hermite_e.hermegauss(64)
    weights = weights / math.sqrt(2 * math.pi)
    for theta in ([0.0, 1.0], [-2.0, 0.4], [3.0, 2.5]):
        for x in (-3.0, 0.0, 4.0):
            mean = rho * x + (1 - rho) * theta[0]
            sd = theta[1] * math.sqrt(1 - rho * rho)
            y = mean + sd * nodes
            # integrate p(y) dy = E_w[p(mean + sd g) * sd / phi(g)]
            p = np.exp(m.log_transition_density(theta, x, y))
            phi = np.exp(-0.5 * nodes**2) / math.sqrt(2 * math.pi)
            assert float(np.sum(weights * p * sd / phi)) == pytest.approx(1.0, abs=1e-8)


# --- score and Hessian ----------------------------------------------------------


def test_score_examples():
    m = ar1(0.0)
    ev = m.score_and_hessian([0.0, 1.0], 0.0, 0.0)
    np.testing.assert_array_equal(ev.psi, [0.0, -1.0])
    ev = m.score_and_hessian([0.0, 1.0], 0.0, 1.0)
    np.testing.assert_array_equal(ev.psi, [1.0, 0.0])
    np.testing.assert_array_equal(ev.hessian, [[-1.0, -2.0], [-2.0, -2.0]])


def test_score_matches_finite_differences():
    h = 1e-5
    for rho, theta, x, y in zip(*random_points(1000, 1)):
        m = ar1(rho)
        psi = m.score_and_hessian(theta, x, y).psi
        fd = fd_score(m, theta, x, y, h)
        assert np.max(np.abs(psi - fd)) <= 1e-6


def test_hessian_matches_finite_differences():
    h = 1e-5
    for rho, theta, x, y in zip(*random_points(1000, 2)):
        m = ar1(rho)
        ev = m.score_and_hessian(theta, x, y)
        fd = fd_hessian(m, theta, x, y, h)
        assert np.max(np.abs(ev.hessian - fd)) <= 1e-5
        assert np.abs(ev.hessian[0, 1] - ev.hessian[1, 0]) <= 1e-12


def test_score_batches():
    m = ar1(0.4)
    rho, theta, x, y = random_points(20, 3)
    ev = m.score_and_hessian(theta, x, y)
    for k in range(20):
        one = m.score_and_hessian(theta[k], x[k], y[k])
        assert np.array_equal(one.psi, ev.psi[k])
        assert np.array_equal(one.hessian, ev.hessian[k])


# --- Fisher information ------------------------------------------------------


def test_fisher_examples():
    np.testing.assert_array_equal(ar1(0.0).fisher_information([0.0, 1.0]), np.diag([1.0, 2.0]))
    np.testing.assert_allclose(ar1(1.0 / 3.0).fisher_information([0.0, 1.0]), np.diag([0.5, 2.0]), rtol=1e-15)


@pytest.mark.parametrize("rho, theta", [(0.0, [0.0, 1.0]), (0.5, [1.0, 1.0]), (-0.4, [2.0, 0.6])])
def test_fisher_matches_monte_carlo_outer_product(rho, theta):
    m = ar1(rho)
    rng = make_rng(99)
    theta = np.array(theta)
    count = 100_000
    z0 = m.stationary_from_noise(theta, rng.standard_normal(count))
    z1 = m.transition_from_noise(theta, z0, rng.standard_normal(count))
    psi = m.score_and_hessian(theta, z0, z1).psi
    outer = psi[:, :, None] * psi[:, None, :]
    mean = outer.mean(axis=0)
    se = outer.std(axis=0, ddof=1) / math.sqrt(count)
    fisher = m.fisher_information(theta)
    assert np.all(np.abs(mean - fisher) <= 3 * se + 1e-15)


# --- closed-form oracles -------------------------------------------------------


def test_conditional_score_mean_examples():
    np.testing.assert_array_equal(ar1(0.5).conditional_score_mean([1.0, 1.0], [1.0, 1.0]), [0.0, 0.0])
    np.testing.assert_allclose(ar1(0.0).conditional_score_mean([1.0, 1.0], [0.0, 1.0]), [-1.0, 1.0])
    np.testing.assert_allclose(ar1(0.0).conditional_score_mean([0.0, 2.0], [0.0, 1.0]), [0.0, -0.375])


def test_conditional_score_mean_matches_monte_carlo():
    m = ar1(0.5)
    theta, star = np.array([0.6, 1.3]), np.array([1.0, 1.0])
    rng = make_rng(5)
    count = 200_000
    z0 = m.stationary_from_noise(star, rng.standard_normal(count))
    z1 = m.transition_from_noise(star, z0, rng.standard_normal(count))
    psi = m.score_and_hessian(theta, z0, z1).psi
    se = psi.std(axis=0, ddof=1) / math.sqrt(count)
    assert np.all(np.abs(psi.mean(axis=0) - m.conditional_score_mean(theta, star)) <= 4 * se)


def test_conditional_y_moments_examples():
    m1, m2, m4 = ar1(0.5).conditional_y_moments([1.0, 1.0], [1.0, 1.0])
    assert (m1, m2, m4) == pytest.approx((0.0, 0.75, 1.6875), abs=1e-15)
    m1, m2, m4 = ar1(0.0).conditional_y_moments([0.0, 1.0], [1.0, 1.0])
    assert (m1, m2, m4) == pytest.approx((1.0, 2.0, 10.0), abs=1e-14)


@pytest.mark.parametrize("rho, theta", [(0.5, [0.2, 1.0]), (-0.3, [1.5, 2.0]), (0.0, [0.0, 0.5])])
def test_conditional_y_moments_match_monte_carlo(rho, theta):
    m = ar1(rho)
    star = np.array([1.0, 1.0])
    rng = make_rng(17)
    count = 1_000_000
    x = m.stationary_from_noise(star, rng.standard_normal(count))
    y = m.transition_from_noise(star, x, rng.standard_normal(count))
    Y = y - rho * x - (1 - rho) * theta[0]
    for power, exact in zip((1, 2, 4), m.conditional_y_moments(theta, star)):
        v = Y**power
        se = v.std(ddof=1) / math.sqrt(count)
        assert abs(v.mean() - exact) <= 4 * se


def test_root_property():
    m = ar1(0.5)
    star = np.array([1.0, 1.0])
    assert np.array_equal(m.conditional_score_mean(star, star), [0.0, 0.0])
    rng = make_rng(8)
    z = path_from_noise(m, star, rng.standard_normal(100_001))
    psi = m.score_and_hessian(star, z[:-1], z[1:]).psi
    # the score at the truth is a martingale difference, so iid standard errors apply
    se = psi.std(axis=0, ddof=1) / math.sqrt(psi.shape[0])
    assert np.all(np.abs(psi.mean(axis=0)) <= 4 * se)


def test_expected_log_density_closed_form_matches_quadrature():
    m = ar1(0.5)
    star = np.array([1.0, 1.0])
    for theta in ([1.0, 1.0], [0.5, 1.0], [1.0, 0.5], [-2.0, 2.5]):
        assert quadrature_expected_log_density(m, theta, star) == pytest.approx(m.expected_log_density(theta, star), abs=1e-11)


# --- sampling -----------------------------------------------------------------


def test_transition_with_zero_noise_is_conditional_mean():
    m = ar1(0.5)
    assert m.transition_from_noise([2.0, 0.3], 1.5, 0.0) == 0.5 * 1.5 + 0.5 * 2.0
    assert m.stationary_from_noise([2.0, 0.3], 0.0) == 2.0


def test_sampling_moments():
    m = ar1(0.0)
    theta = np.array([0.7, 1.8])
    rng = make_rng(3)
    count = 100_000
    draws = m.sample_transition(theta, np.zeros(count), rng)
    assert abs(draws.mean() - 0.7) <= 4 * 1.8 / math.sqrt(count)
    init = m.sample_stationary_initial(np.broadcast_to(theta, (count, 2)), rng)
    var = init.var(ddof=1)
    se = math.sqrt(2.0 / (count - 1)) * 1.8**2
    assert abs(var - 1.8**2) <= 4 * se


def test_sampling_is_deterministic():
    m = ar1(0.5)
    a = m.sample_transition([1.0, 1.0], 0.3, make_rng(42))
    b = m.sample_transition([1.0, 1.0], 0.3, make_rng(42))
    assert a == b
    assert m.sample_stationary_initial([1.0, 1.0], make_rng(7)) == m.sample_stationary_initial([1.0, 1.0], make_rng(7))


def test_path_batched_equals_single_and_chunked():
    m = ar1(0.5)
    theta = np.array([1.0, 1.0])
    noise = make_rng(4).standard_normal((4, 300))
    batched = path_from_noise(m, theta, noise)
    for row, g in zip(batched, noise):
        assert np.array_equal(path_from_noise(m, theta, g), row)
        head = path_from_noise(m, theta, g[:120])
        tail = path_from_noise(m, theta, g[120:], start=head[-1])
        assert np.array_equal(np.concatenate([head, tail]), row)


# --- gain bound -----------------------------------------------------------------


@pytest.mark.parametrize(
    "rho, b1, b2, expected",
    [(0.0, 1.0, 1.0 + 1e-12, 0.5), (0.5, 1.0, 2.0, 12.0), (0.0, 0.5, 2.0, 8.0)],
)
def test_beta_lower_bound(rho, b1, b2, expected):
    m = ar1(rho, ParameterBox((-1.0, b1), (1.0, b2)))
    assert m.beta_lower_bound() == pytest.approx(expected, rel=1e-11)


# --- likelihood dominance along a chain ------------------------------------------


def test_truth_maximises_path_average_on_grid():
    cfg = ExperimentConfig(n=100_000, seed=2024)
    offsets = [-0.4, -0.2, 0.0, 0.2, 0.4]
    grid = [cfg.theta_star + [a, b] for a in offsets for b in offsets if (a, b) != (0.0, 0.0)]
    report = ergodic_report(cfg, grid)
    for p in report["points"]:
        assert p["distance"] >= 0.2 - 1e-12
        assert p["star_minus_point"] > 3 * p["star_minus_point_se"]
    assert report["maximizer_ok"]

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import i0e

from spreadlab import closed_form as cf
from spreadlab.errors import DimensionError, DomainError, WindowError
from spreadlab.losses import LossWeights, asymptotic_empirical
from spreadlab.metrics import class_spread
from spreadlab.sphere import make_collapsed, make_mu_theta, make_uniform

FIG5_TAUS = (0.1, 0.25, 0.5, 1.0, 2.0)
FIG5_DIMS = (2, 4, 8, 16, 32, 64, 128)


def grid_argmin(w, step=1e-4):
    thetas = np.arange(0.0, math.pi / 2, step)
    vals = [cf.loss_mu_theta(t, w) for t in thetas]
    return thetas[int(np.argmin(vals))]


def test_collapsed_values():
    assert cf.loss_collapsed(LossWeights(0.7, 0.5), 2) == pytest.approx(-1.2)
    assert cf.loss_collapsed(LossWeights(0.7, 0.5), 3) == pytest.approx(-0.9)
    assert cf.loss_collapsed(LossWeights(1.0, 0.3), 5) == 0.0
    with pytest.raises(DomainError):
        cf.loss_collapsed(LossWeights(0.5, 0.5), 1)


@pytest.mark.parametrize("K,d", [(2, 2), (3, 3), (4, 5)])
def test_collapsed_matches_empirical(K, d):
    w = LossWeights(0.7, 0.5)
    assert cf.loss_collapsed(w, K) == pytest.approx(asymptotic_empirical(make_collapsed(K, d, 4), w), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, math.pi / 2), st.floats(0, 1), st.floats(0.1, 2.0))
def test_mu_theta_matches_empirical(theta, alpha, tau):
    w = LossWeights(alpha, tau)
    assert cf.loss_mu_theta(theta, w) == pytest.approx(asymptotic_empirical(make_mu_theta(2, 2, theta, 2), w), abs=1e-9)
    assert cf.k3_loss_mu_theta(theta, w) == pytest.approx(asymptotic_empirical(make_mu_theta(3, 3, theta, 2), w), abs=1e-9)


def test_mu_theta_boundary():
    w = LossWeights(0.7, 0.5)
    assert cf.loss_mu_theta(0.0, w) == pytest.approx(cf.loss_collapsed(w, 2), abs=1e-15)
    assert abs(cf.loss_mu_theta(1e-8, w) - cf.loss_collapsed(w, 2)) <= 1e-8
    assert cf.k3_loss_mu_theta(0.0, w) == pytest.approx(cf.loss_collapsed(w, 3), abs=1e-15)
    with pytest.raises(DomainError):
        cf.loss_mu_theta(2.0, w)
    with pytest.raises(DomainError):
        cf.k3_loss_mu_theta(-0.1, w)


@pytest.mark.parametrize("alpha,tau,expected", [(0.7, 0.5, 0.225891), (0.75, 0.5, 0.365509)])
def test_theta_star_against_grid(alpha, tau, expected):
    w = LossWeights(alpha, tau)
    ts = cf.theta_star(w)
    assert abs(ts - grid_argmin(w)) <= 1e-4
    # published reference values are grid-rounded
    assert ts == pytest.approx(expected, abs=2e-4)


def test_spread_star_values():
    w = LossWeights(0.7, 0.5)
    assert cf.spread_star(w) == pytest.approx(0.223983, abs=2e-4)
    assert cf.spread_star(w) == pytest.approx(math.sin(cf.theta_star(w)), abs=1e-12)
    cfg = make_mu_theta(2, 3, cf.theta_star(w), 3)
    assert class_spread(cfg)[1] == pytest.approx(cf.spread_star(w), abs=1e-9)


def test_theta_star_at_lower_edge():
    assert cf.theta_star(LossWeights(2 / 3 + 1e-12, 0.5)) < 1e-5
    assert cf.spread_star(LossWeights(2 / 3 + 1e-12, 0.5)) < 1e-5


def test_theta_star_window_errors():
    with pytest.raises(WindowError):
        cf.theta_star(LossWeights(0.6, 0.5))
    with pytest.raises(WindowError):
        cf.theta_star(LossWeights(0.99, 0.5))
    with pytest.raises(WindowError):
        cf.theta_star(LossWeights(1.0, 0.5))


@pytest.mark.parametrize("alpha", [0.68, 0.7, 0.72, 0.74, 0.8])
def test_loss_at_theta_star_closed_form(alpha):
    w = LossWeights(alpha, 0.5)
    direct = cf.loss_mu_theta(cf.theta_star(w), w)
    assert cf.loss_mu_theta_star(w) == pytest.approx(direct, abs=1e-12)
    a = alpha
    paper = -2 * (1 - a) / 0.5 - (3 - 3 * a) / 2 * math.log(3 - 3 * a) - (3 * a - 1) / 2 * math.log(3 * a - 1)
    assert direct == pytest.approx(paper, abs=1e-12)


def test_alpha_upper_bound():
    for tau in (0.25, 0.5, 1.0):
        top = cf.alpha_upper_mu_theta(tau)
        assert cf.spread_star(LossWeights(top - 1e-9, tau)) == pytest.approx(1.0, abs=1e-6)
        with pytest.raises(WindowError):
            cf.spread_star(LossWeights(min(top + 1e-6, 1 - 1e-9), tau))


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.5, 0.6, 2 / 3])
def test_collapse_optimal_below_window(alpha):
    w = LossWeights(alpha, 0.5)
    vals = np.array([cf.loss_mu_theta(t, w) for t in np.arange(0.0, math.pi / 2, 1e-3)])
    assert np.all(np.diff(vals) >= -1e-12)


@pytest.mark.parametrize("tau", [0.25, 0.5, 1.0, 2.0])
def test_wiener_circle_closed_form(tau):
    # on S^1 the mean kernel is e^{-1/tau} I_0(1/tau)
    assert cf.wiener_constant(2, tau) == pytest.approx(i0e(1 / tau), rel=1e-12)


@pytest.mark.parametrize("tau", [0.25, 0.5, 1.0, 2.0])
def test_wiener_sphere_closed_form(tau):
    # on S^2 the inner product is uniform on [-1, 1]
    exact = tau / 2 * (1 - math.exp(-2 / tau))
    assert cf.wiener_constant(3, tau) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("d", [2, 3, 8, 32, 128])
@pytest.mark.parametrize("tau", [0.1, 0.5, 2.0])
def test_wiener_bounds_and_quadrature_convergence(d, tau):
    W = cf.wiener_constant(d, tau)
    assert math.exp(-2 / tau) < W < 1
    assert abs(cf.log_wiener_constant(d, tau, nodes=512) - cf.log_wiener_constant(d, tau)) < 1e-10


def test_wiener_large_tau():
    assert cf.wiener_constant(8, 1e6) == pytest.approx(1.0, abs=1e-5)


def test_wiener_monte_carlo_d3():
    rng = np.random.default_rng(7)
    u = rng.standard_normal((10**6, 3))
    v = rng.standard_normal((10**6, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    mc = np.mean(np.exp(-np.sum((u - v) ** 2, axis=1) / (2 * 0.5)))
    assert cf.wiener_constant(3, 0.5) == pytest.approx(mc, rel=1e-2)


def test_wiener_rejects():
    with pytest.raises(DimensionError):
        cf.wiener_constant(1, 0.5)
    with pytest.raises(DomainError):
        cf.wiener_constant(3, 0.0)


def test_c_window_on_figure_grid():
    for tau in FIG5_TAUS:
        for d in FIG5_DIMS:
            c = cf.c_tau_d(tau, d)
            assert 2 / 3 < c < 1


def test_c_window_negative_radicand(monkeypatch):
    monkeypatch.setattr(cf, "log_wiener_constant", lambda d, tau: 10.0)
    with pytest.raises(WindowError):
        cf.c_tau_d(0.5, 3)


def test_loss_uniform_alpha_one():
    assert cf.loss_uniform(LossWeights(1.0, 0.5), 4) == pytest.approx(cf.log_wiener_constant(4, 0.5))


def test_loss_uniform_matches_empirical():
    w = LossWeights(0.7, 0.5)
    emp = np.mean([asymptotic_empirical(make_uniform(2, 3, 2000, s), w) for s in range(5)])
    assert cf.loss_uniform(w, 3) == pytest.approx(emp, rel=0.02)


@pytest.mark.parametrize("d", [2, 3, 8])
@pytest.mark.parametrize("alpha", [0.68, 0.7, 0.72, 0.74])
def test_window_theorem(alpha, d):
    w = LossWeights(alpha, 0.5)
    best = cf.loss_mu_theta(cf.theta_star(w), w)
    if alpha < cf.c_tau_d(0.5, d):
        assert best <= cf.loss_collapsed(w, 2)
        assert best <= cf.loss_uniform(w, d)
    else:
        # outside the window the uniform measure may win; the theorem makes no claim
        assert best <= cf.loss_collapsed(w, 2)


def test_uniform_beats_mu_theta_past_window():
    w = LossWeights(0.74, 0.5)
    assert cf.c_tau_d(0.5, 8) < 0.74
    assert cf.loss_uniform(w, 8) < cf.loss_mu_theta_star(w)


def test_k3_distances_match_geometry():
    from spreadlab.sphere import regular_simplex, rotate_in_plane

    theta = 0.9
    V = regular_simplex(3, 3).vertices
    R = lambda v: rotate_in_plane(v, 0, 1, theta)  # noqa: E731
    got = cf.k3_pair_sq_distances(theta)
    assert np.sum((V[0] - R(V[1])) ** 2) == pytest.approx(got["v0_Rv1"])
    assert np.sum((V[1] - R(V[2])) ** 2) == pytest.approx(got["v1_Rv2"])
    assert np.sum((V[0] - R(V[0])) ** 2) == pytest.approx(got["v0_Rv0"])
    assert np.sum((V[1] - R(V[1])) ** 2) == pytest.approx(got["v1_Rv1"])
    assert np.sum((V[1] - V[2]) ** 2) == pytest.approx(got["simplex"])


def test_k3_spread_beats_collapse():
    w = LossWeights(0.7, 0.5)
    thetas = np.linspace(0.0, math.pi / 2, 200)
    assert min(cf.k3_loss_mu_theta(t, w) for t in thetas) < cf.loss_collapsed(w, 3)

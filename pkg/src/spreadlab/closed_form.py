"""Analytic losses of the reference geometries and the alpha window.

K=2 formulas use the antipodal simplex and the symmetric two-atom family
(atoms at angles +-theta around each vertex).  K=3 formulas use the
triangle in the (0, 2) plane mixed with its copy rotated by theta in the
(0, 1) plane.  The uniform-measure loss goes through the Wiener constant
of the Gaussian kernel ``exp(-|u - u'|^2 / 2 tau)`` on S^{d-1}.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from spreadlab.errors import DimensionError, DomainError, WindowError
from spreadlab.losses import LossWeights
from spreadlab.special import gauss_legendre, log_gamma

QUAD_NODES = 256
_HALF_PI = math.pi / 2


def _check_theta(theta):
    if not (0.0 <= theta <= _HALF_PI):
        raise DomainError(f"theta must lie in [0, pi/2], got {theta}")


def loss_collapsed(weights: LossWeights, K: int = 2) -> float:
    """``-(1 - alpha) K / ((K - 1) tau)``: every cross-class pair sits at distance^2 2K/(K-1)."""
    if K < 2:
        raise DomainError("K must be at least 2")
    return -(1.0 - weights.alpha) * K / ((K - 1) * weights.tau)


def loss_mu_theta(theta: float, weights: LossWeights) -> float:
    """Asymptotic loss of the K=2 two-atom family at angle ``theta``."""
    _check_theta(theta)
    a, t = weights.alpha, weights.tau
    x = 2.0 * math.sin(theta) ** 2 / t
    return (
        -math.log(2.0)
        - 2.0 * (1.0 - a) / t
        + (1.0 - a) * np.logaddexp(0.0, x)
        + a * np.logaddexp(0.0, -x)
        + (1.0 - a) * math.sin(theta) ** 2 / t
    )


def alpha_upper_mu_theta(tau: float) -> float:
    """``(3 e^{2/tau} + 1) / (3 e^{2/tau} + 3)``: above it the K=2 loss decreases on all of (0, pi/2]."""
    e = math.exp(-2.0 / tau)
    return (3.0 + e) / (3.0 + 3.0 * e)


def _sin2_star(weights: LossWeights) -> float:
    a, t = weights.alpha, weights.tau
    if a <= 2.0 / 3.0:
        raise WindowError(f"alpha={a} is at or below 2/3: collapse is optimal within the family")
    if a >= 1.0:
        raise WindowError("alpha=1 has no interior optimum")
    r = 0.5 * t * math.log((3.0 * a - 1.0) / (3.0 - 3.0 * a))
    if r > 1.0:
        raise WindowError(f"alpha={a} is above the window for tau={t}: sin^2(theta*) = {r} > 1")
    return r


def theta_star(weights: LossWeights) -> float:
    """Minimizer of :func:`loss_mu_theta` over theta for alpha in the window."""
    return math.asin(math.sqrt(_sin2_star(weights)))


def spread_star(weights: LossWeights) -> float:
    """Class spread of the optimal two-atom configuration, ``sin(theta*)``."""
    return math.sqrt(_sin2_star(weights))


def loss_mu_theta_star(weights: LossWeights) -> float:
    """Value at the optimum written in alpha only."""
    a, t = weights.alpha, weights.tau
    _sin2_star(weights)
    p, q = 3.0 - 3.0 * a, 3.0 * a - 1.0
    return -2.0 * (1.0 - a) / t - 0.5 * p * math.log(p) - 0.5 * q * math.log(q)


def log_wiener_constant(d: int, tau: float, nodes: int = QUAD_NODES) -> float:
    """log W for the Gaussian 1/(2 tau) energy of the uniform measure on S^{d-1}.

    With u = (1 - cos(phi)) / 2 the defining integral becomes
    ``Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2)) * int_0^pi exp(-(1 - cos phi)/tau) sin^{d-2}(phi) dphi``,
    which is smooth for every d >= 2 and is integrated by Gauss-Legendre.
    """
    if d < 2:
        raise DimensionError("Wiener constant needs d >= 2")
    if tau <= 0:
        raise DomainError("tau must be positive")
    phi, w = gauss_legendre(nodes, 0.0, math.pi)
    log_f = -(1.0 - np.cos(phi)) / tau
    if d > 2:
        log_f = log_f + (d - 2) * np.log(np.sin(phi))
    log_norm = log_gamma(d / 2.0) - log_gamma((d - 1) / 2.0) - 0.5 * math.log(math.pi)
    return float(log_norm + logsumexp(log_f, b=w))


def wiener_constant(d: int, tau: float, nodes: int = QUAD_NODES) -> float:
    return math.exp(log_wiener_constant(d, tau, nodes))


def c_tau_d(tau: float, d: int) -> float:
    """Upper end of the alpha window in which the optimal two-atom family beats both extremes."""
    radicand = (1.0 / tau) * (-2.0 + 1.0 / tau) - 2.0 * log_wiener_constant(d, tau)
    if radicand < 0:
        raise WindowError(f"window undefined for tau={tau}, d={d}: radicand {radicand} < 0")
    return (2.0 + 1.0 / tau - math.sqrt(radicand)) / 3.0


def loss_uniform(weights: LossWeights, d: int) -> float:
    """``log W + (1 - alpha) / tau``."""
    return log_wiener_constant(d, weights.tau) + (1.0 - weights.alpha) / weights.tau


def k3_pair_sq_distances(theta: float) -> dict[str, float]:
    """Closed-form squared distances for the K=3 mixed simplex."""
    c = math.cos(theta)
    return {
        "v0_Rv1": 2.0 + c,
        "v1_Rv2": (7.0 - c) / 2.0,
        "v0_Rv0": 2.0 - 2.0 * c,
        "v1_Rv1": (1.0 - c) / 2.0,
        "simplex": 3.0,
    }


def k3_loss_mu_theta(theta: float, weights: LossWeights) -> float:
    """Asymptotic loss of the K=3 mixture of the simplex and its theta-rotated copy."""
    _check_theta(theta)
    a, t = weights.alpha, weights.tau
    dist = k3_pair_sq_distances(theta)
    k = lambda sq: -sq / (2.0 * t)  # noqa: E731
    lse = lambda vals, wts: float(logsumexp(vals, b=wts))  # noqa: E731
    diff = (
        lse([k(dist["simplex"]), k(dist["v0_Rv1"])], [0.5, 0.5]) / 3.0
        + 2.0 / 3.0 * lse([k(dist["simplex"]), k(dist["v1_Rv2"]), k(dist["v0_Rv1"])], [0.5, 0.25, 0.25])
    )
    same = (
        lse([0.0, k(dist["v0_Rv0"])], [0.5, 0.5]) / 3.0
        + 2.0 / 3.0 * lse([0.0, k(dist["v1_Rv1"])], [0.5, 0.5])
    )
    # mean over classes of E|u - u'|^2 / 2 tau with self pairs at weight 1/2
    align = (0.5 * dist["v0_Rv0"] + 2.0 * 0.5 * dist["v1_Rv1"]) / (3.0 * 2.0 * t)
    return (1.0 - a) * diff + a * same + (1.0 - a) * align

"""Log-gamma and Gauss-Legendre helpers."""

import math
from functools import lru_cache

import numpy as np

# Lanczos coefficients, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def log_gamma(x: float) -> float:
    """log Gamma(x) for x > 0 via the Lanczos approximation."""
    if x <= 0:
        raise ValueError("log_gamma is defined here for x > 0 only")
    if x < 0.5:
        # reflection keeps the series in its accurate range
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[k] / (x + k)
    t = x + _LANCZOS_G + 0.5
    return 0.5 * math.log(2.0 * math.pi) + (x + 0.5) * math.log(t) - t + math.log(acc)


def gamma(x: float) -> float:
    return math.exp(log_gamma(x))


@lru_cache(maxsize=None)
def gauss_legendre(n: int, a: float, b: float):
    """Nodes and weights for ``n``-point Gauss-Legendre on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    nodes = half * x + 0.5 * (a + b)
    weights = half * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights

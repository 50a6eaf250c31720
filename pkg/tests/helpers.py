"""Shared independent oracles for the test suite.

These deliberately avoid the code paths they validate: the normal CDF is
computed by adaptive quadrature of the density (not erfc), and its
inverse by bisection against that quadrature.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad


def normal_cdf_quadrature(t: float) -> float:
    """Phi(t) by adaptive quadrature of the standard normal density."""

    def density(x):
        return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)

    if t >= 0.0:
        val, _ = quad(density, 0.0, t, epsabs=1e-15, epsrel=1e-13)
        return 0.5 + val
    val, _ = quad(density, -np.inf, t, epsabs=1e-30, epsrel=1e-13)
    return val


def normal_cdf_inv_bisect(p: float, lo: float = -40.0, hi: float = 40.0) -> float:
    """Phi^{-1}(p) by bisection against the quadrature oracle."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if normal_cdf_quadrature(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

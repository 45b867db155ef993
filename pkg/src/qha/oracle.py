"""Closed-form reference values used to validate the numerical pipeline.

The key oracle is the spectrum of the disk localisation operator with a
Gaussian window: its eigenvalues are ``P(n + 1, pi R^2)``, the regularised
lower incomplete gamma function.  It is evaluated here from the Poisson
series in log space, independently of any special-function library.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "reg_lower_gamma_int",
    "antiwick_disk_eigenvalues",
    "antiwick_disk_radial",
    "antiwick_count",
    "gaussian_ambiguity",
    "disk_area",
    "disk_overlap_area",
]


def _logsumexp(a) -> float:
    a = np.asarray(a, dtype=float)
    m = float(np.max(a))
    return m + math.log(float(np.sum(np.exp(a - m))))


def reg_lower_gamma_int(m: int, x: float) -> float:
    """``P(m, x)`` for a positive integer ``m`` and ``x >= 0``.

    ``P(m, x) = Pr[Poisson(x) >= m]``.  The shorter side of the Poisson
    distribution is summed in log space so that neither tail loses precision.
    """
    if m < 1 or int(m) != m:
        raise ValueError("m must be a positive integer")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    lx = math.log(x)

    def logpmf(k):
        k = np.asarray(k, dtype=float)
        return k * lx - x - np.array([math.lgamma(v + 1) for v in k])

    if m > x:
        # upper tail sum_{k >= m}; past m + 40 sqrt(x) + 100 the terms are negligible
        ks = np.arange(m, m + int(40 * math.sqrt(x)) + 100)
        return min(1.0, math.exp(_logsumexp(logpmf(ks))))
    q = math.exp(_logsumexp(logpmf(np.arange(m))))
    return max(0.0, 1.0 - q)


def antiwick_disk_eigenvalues(R: float, count: int) -> np.ndarray:
    """``P(n + 1, pi R^2)`` for ``n = 0 .. count - 1``."""
    x = math.pi * R * R
    return np.array([reg_lower_gamma_int(n + 1, x) for n in range(count)])


def antiwick_disk_radial(R: float, n: int) -> float:
    """The same eigenvalue from the radial integral ``int_0^{pi R^2} s^n e^{-s} / n! ds``."""
    from scipy.integrate import quad

    x = math.pi * R * R
    lg = math.lgamma(n + 1)

    def f(s):
        return math.exp(n * math.log(s) - s - lg) if s > 0 else (1.0 if n == 0 else 0.0)

    peak = min(float(n), x)
    val = 0.0
    for a, b in ((0.0, peak), (peak, x)):
        if b > a:
            val += quad(f, a, b, epsabs=1e-15, epsrel=1e-13, limit=400)[0]
    return val


def antiwick_count(R: float, delta: float) -> int:
    """``#{n : P(n + 1, pi R^2) > 1 - delta}``; the eigenvalues decrease in ``n``."""
    x = math.pi * R * R
    n = 0
    while reg_lower_gamma_int(n + 1, x) > 1.0 - delta:
        n += 1
    return n


def gaussian_ambiguity(x, y):
    """``|<pi(x, y) phi, phi>|`` for ``phi(t) = 2^{1/4} exp(-pi t^2)``."""
    return np.exp(-np.pi * (np.asarray(x) ** 2 + np.asarray(y) ** 2) / 2)


def disk_area(R: float) -> float:
    return math.pi * R * R


def disk_overlap_area(R: float, d) -> np.ndarray:
    """Area of two radius-``R`` disks whose centres are ``d`` apart."""
    d = np.minimum(np.abs(np.asarray(d, dtype=float)), 2 * R)
    return 2 * R * R * np.arccos(d / (2 * R)) - 0.5 * d * np.sqrt(4 * R * R - d * d)

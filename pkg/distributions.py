"""
Closed-form distribution oracles for class-row elements.

A class row that bundles n random +-1 hypervectors has elements following
a (shifted) binomial law with sigma = sqrt(n); summing n uniform intervals
[-1, 1] instead gives the stretched Irwin-Hall law with sigma = sqrt(n/3).
Both approach a normal distribution, which is what the cutoff b = beta *
sigma relies on.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm

from errors import DimensionError

# Above this n, factorials and binomial coefficients go through log-gamma
EXACT_FACTORIAL_LIMIT = 20


@dataclass(frozen=True)
class DistributionParams:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"Distribution count n must be a positive integer, got {self.n!r}")


def _log_comb(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def class_element_pmf(n, v):
    """Probability that a sum of n independent fair +-1 draws equals v"""
    n = DistributionParams(n).n
    if v != int(v):
        return 0.0
    v = int(v)
    if v < -n or v > n or (v + n) % 2:
        return 0.0
    successes = (v + n) // 2
    if n <= EXACT_FACTORIAL_LIMIT:
        return math.comb(n, successes) / 2 ** n
    return float(np.exp(_log_comb(n, successes) - n * math.log(2.0)))


def irwin_hall_pdf(x, n):
    """
    Density of a sum of n independent uniforms on [-1, 1] at x.

    f(x; n) = 1 / (2 (n-1)!) * sum_{k=0}^{floor((x+n)/2)} (-1)^k C(n, k) ((x+n)/2 - k)^(n-1)
    """
    n = DistributionParams(n).n
    x = float(x)
    if x < -n or x > n:
        return 0.0
    y = (x + n) / 2.0
    total = 0.0
    for k in range(int(math.floor(y)) + 1):
        sign = -1.0 if k % 2 else 1.0
        base = y - k
        if n <= EXACT_FACTORIAL_LIMIT:
            total += sign * math.comb(n, k) * base ** (n - 1) / (2.0 * math.factorial(n - 1))
        elif base > 0:
            log_term = _log_comb(n, k) + (n - 1) * math.log(base) - math.log(2.0) - gammaln(n)
            total += sign * math.exp(log_term)
    return max(total, 0.0)


def irwin_hall_knots(n):
    """Points where the piecewise-polynomial density changes piece"""
    n = DistributionParams(n).n
    return [-n + 2 * k for k in range(n + 1)]


def binomial_sigma(n):
    return math.sqrt(DistributionParams(n).n)


def irwin_hall_sigma(n):
    return math.sqrt(DistributionParams(n).n / 3.0)


def normal_pdf(x, sigma, mu=0.0):
    return norm.pdf(x, loc=mu, scale=sigma)


def row_sigma(v):
    """Sample standard deviation (denominator D - 1) of a hypervector's elements"""
    if v.dim < 2:
        raise DimensionError(f"row_sigma needs at least 2 elements, got {v.dim}")
    return float(np.std(v.values.astype(np.float64), ddof=1))


def matrix_row_sigmas(rows):
    """row_sigma for every row of an (m, D) integer matrix"""
    rows = np.asarray(rows)
    if rows.shape[-1] < 2:
        raise DimensionError(f"row_sigma needs at least 2 elements, got {rows.shape[-1]}")
    return np.std(rows.astype(np.float64), axis=-1, ddof=1)

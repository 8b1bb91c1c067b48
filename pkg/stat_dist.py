"""
Upper-tail probabilities used by the Bell tests, each returned with its natural log so
that tails far below double-precision underflow still compare meaningfully.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr, logsumexp, ndtr

LOG_2 = math.log(2.0)

# binomial terms this far below the largest one cannot change a double
NEGLIGIBLE_LOG_TERM = 60.0

# tail sums stop this many standard deviations past their first term
TAIL_WINDOW_SD = 20.0
TAIL_WINDOW_MIN = 64


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class TailProb:
    p: float
    log_p: float

    @classmethod
    def from_log(cls, log_p):
        return cls(p=float(math.exp(log_p)) if log_p > -math.inf else 0.0, log_p=float(log_p))

    def __float__(self):
        return self.p


def normal_sf(z):
    """P(Z >= z) for standard normal Z."""
    if not math.isfinite(z):
        raise DomainError(f"z must be finite, got {z}")
    return TailProb(p=float(ndtr(-z)), log_p=float(log_ndtr(-z)))


def chisq1_sf(w):
    """Upper tail of chi-square with one degree of freedom: 2 * normal_sf(sqrt(w))."""
    if w < 0:
        raise DomainError(f"chi-square statistic must be >= 0, got {w}")
    root = math.sqrt(w)
    return TailProb.from_log(LOG_2 + float(log_ndtr(-root)))


def wilks_mixture_sf(w):
    """Upper tail of the 50-50 mixture of chi-square(1) and a point mass at zero."""
    if w < 0:
        raise DomainError(f"Wilks statistic must be >= 0, got {w}")
    if w == 0:
        return TailProb(p=1.0, log_p=0.0)
    return TailProb.from_log(float(log_ndtr(-math.sqrt(w))))


def binom_log_pmf(n, p, k):
    k = np.asarray(k, dtype=float)
    log_choose = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return log_choose + k * math.log(p) + (n - k) * math.log1p(-p)


def _log_tail_window(n, p, start, stop):
    """
    Log of sum_{j=start..stop} P(X = j) for a tail whose largest term is at `start`.

    Terms are walked outward from `start` by their ratios, so only the window where
    they are within NEGLIGIBLE_LOG_TERM of the first term is built.
    """
    sd = math.sqrt(n * p * (1.0 - p))
    width = int(TAIL_WINDOW_SD * sd) + TAIL_WINDOW_MIN
    step = 1 if stop >= start else -1
    end = start + step * min(width, abs(stop - start))
    j = np.arange(start, end, step, dtype=float)
    if step == 1:
        log_ratio = np.log(n - j) - np.log(j + 1) + math.log(p) - math.log1p(-p)
    else:
        log_ratio = np.log(j) - np.log(n - j + 1) + math.log1p(-p) - math.log(p)
    terms = float(binom_log_pmf(n, p, start)) + np.concatenate([[0.0], np.cumsum(log_ratio)])
    terms = terms[terms > terms.max() - NEGLIGIBLE_LOG_TERM]
    # smallest terms first
    return float(logsumexp(np.sort(terms)))


def binom_sf(n, p, k):
    """P(X >= k) for X ~ Bin(n, p), summed in the log domain."""
    if not 0 < p < 1:
        raise DomainError(f"success probability must be in (0, 1), got {p}")
    if n < 0 or k > n + 1:
        raise DomainError(f"need 0 <= k <= n + 1, got n={n}, k={k}")
    if k <= 0:
        return TailProb(p=1.0, log_p=0.0)
    if k > n:
        return TailProb(p=0.0, log_p=-math.inf)

    if k > n * p:
        log_p = _log_tail_window(n, p, k, n)
    else:
        # complement of the lower tail P(X <= k - 1)
        log_lower = _log_tail_window(n, p, k - 1, 0)
        lower = math.exp(log_lower)
        log_p = math.log1p(-lower) if lower < 1.0 else -math.inf
    return TailProb.from_log(min(log_p, 0.0))


def chebyshev_p(z):
    """Distribution-free bound P(|Z| >= z) <= 1/z^2."""
    if z <= 0:
        raise DomainError(f"Chebyshev bound needs z > 0, got {z}")
    p = min(1.0, 1.0 / (z * z))
    return TailProb(p=p, log_p=math.log(p))

"""Closed-form limits and bounds for merged versus ensembled learners.

Notation: ``gamma = p / n``, ``lam_t = n / n_t`` and ``frac_t = n_t / n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    pass


@dataclass
class TheoryInputs:
    """Bundle of every parameter a calculator may consume."""

    p: int = 10
    n: int = 800
    K: int = 2
    n_t: Sequence[int] = field(default_factory=lambda: [400, 400])
    means: Sequence[Sequence[float]] = field(default_factory=list)
    S: int = 3
    k_n: float = 64
    p_n: float = 1 / 3
    omega: float = 0.5
    sigma: float = 1.0

    def __post_init__(self):
        if sum(self.n_t) != self.n:
            raise DomainError("cluster sizes must sum to n")
        if self.omega <= 0 or not 0 < self.p_n <= 1:
            raise DomainError("need omega > 0 and p_n in (0, 1]")

    @property
    def gamma(self):
        return self.p / self.n

    @property
    def lam(self):
        return [self.n / nt for nt in self.n_t]

    @property
    def frac(self):
        return [nt / self.n for nt in self.n_t]


def ols_highdim_ratio(gamma, K=2):
    """Limit of merged over optimal-ensemble variance, (1 - K g) / (1 - g)."""
    if not (0 <= gamma and K * gamma < 1):
        raise DomainError(f"need 0 <= gamma and K*gamma < 1, got gamma={gamma}, K={K}")
    return (1 - K * gamma) / (1 - gamma)


def mp_trace_inverse_limit(gamma):
    """Limit of trace((X'X)^{-1}) for an n x p standard Gaussian design."""
    if not 0 <= gamma < 1:
        raise DomainError("gamma must lie in [0, 1)")
    return gamma / (1 - gamma)


def scl_qform_limit(lam, gamma):
    """Limit of x'(X_t'X_t)^{-1}x for a cluster holding n / lam rows."""
    r = lam * gamma
    if not 0 <= r < 1:
        raise DomainError("need 0 <= lam*gamma < 1")
    return r / (1 - r)


def ensemble_qform_limit(lams, gamma):
    """Harmonic combination of per-cluster limits (optimal ensemble)."""
    return 1.0 / sum(1.0 / scl_qform_limit(lam, gamma) for lam in lams)


def ensemble_variance_limit_d1(p, n_t, mean_norms):
    """Fixed-p optimal-ensemble variance, [sum_t (q_t / n_t)^{-1}]^{-1}.

    ``q_t = (p - 1) + 1 / (1 + |mu_t|^2)`` is the trace of
    ``(I + mu_t mu_t')^{-1}``.
    """
    if p < 2:
        raise DomainError("p must be at least 2")
    total = 0.0
    for nt, norm in zip(n_t, mean_norms):
        q = (p - 1) + 1.0 / (1.0 + norm**2)
        total += nt / q
    return 1.0 / total


def merged_variance_limit_d2(p, fracs, means):
    """Fixed-p merged variance times n: trace (I + sum_t f_t mu_t mu_t')^{-1}.

    Returns the value scaled by n (that is, ``n * d2``).
    """
    M = np.eye(p)
    for f, mu in zip(fracs, means):
        mu = np.asarray(mu, dtype=float)
        if mu.size != p:
            raise DomainError("mean vectors must have length p")
        M += f * np.outer(mu, mu)
    return float(np.trace(np.linalg.solve(M, np.eye(p))))


def ensemble_limit_s1(p, frac1, a, b):
    """Two-cluster simplification of n * d1.

    ``a = |mu_1|^2``, ``b = |mu_2|^2`` and ``frac1 = n_1 / n``.
    """
    f1, f2 = frac1, 1.0 - frac1
    num = (p - 1) * (1 + f2 * a + f1 * b) + 1
    den = (p - 1) * (1 + a) * (1 + b) + 1 + f1 * a + f2 * b
    return (p - 1) + num / den


def merged_limit_s2_as_printed(p, frac1, mu1, mu2):
    """Literal evaluation of the two-cluster merged expression as printed.

    The printed derivation replaces a trace of a product of rank-one
    matrices by the product of traces, which is exact only for parallel
    means. Use :func:`merged_limit_s2_exact` for comparisons.
    """
    mu1 = np.asarray(mu1, float)
    mu2 = np.asarray(mu2, float)
    f1, f2 = frac1, 1.0 - frac1
    a = float(mu1 @ mu1)
    b = float(mu2 @ mu2)
    c = float(mu2 @ mu1)
    first = f1 * a / (1 + f1 * a)
    num = f2 * b - (2 * f1 * f2 / (1 + f1 * a)) * a * b + (f2 * f1**2 / (1 + f1 * a) ** 2) * a * a
    den = 1 + f2 * b - (f1 * f2 / (1 + f1 * a)) * c**2
    return p - first - num / den


def merged_limit_s2_exact(p, frac1, mu1, mu2):
    return merged_variance_limit_d2(p, [frac1, 1.0 - frac1], [mu1, mu2])


def _check_bound_inputs(k_n, p_n):
    if not 0 < p_n <= 1:
        raise DomainError("p_n must lie in (0, 1]")
    if not k_n > 2:
        raise DomainError("k_n must exceed 2")


def rate_factor(k_n, p_n):
    """k_n ** log2(1 - 3 p_n / 4), evaluated in log space."""
    _check_bound_inputs(k_n, p_n)
    c = 1.0 - 0.75 * p_n
    return math.exp(math.log2(k_n) * math.log(c))


def cf_bound(S, k_n, p_n, learner="ensemble"):
    """Squared-bias bound for the two-cluster centered forest."""
    factor = {"ensemble": S / 8, "merged": S / 4}
    if learner not in factor:
        raise DomainError(f"unknown learner {learner!r}")
    return factor[learner] * rate_factor(k_n, p_n)


def _log2_int(K):
    if K < 2 or K & (K - 1):
        raise DomainError(f"K must be a power of two >= 2, got {K}")
    return K.bit_length() - 1


def cf_bound_general(K, omega, S, k_n, p_n, learner="ensemble"):
    """Squared-bias bound for K equally spaced uniform clusters of width omega."""
    r = _log2_int(int(K))
    if omega <= 0:
        raise DomainError("omega must be positive")
    if learner == "ensemble":
        pre = K / 4
    elif learner == "merged":
        pre = 4.0 ** (r - 1)
    else:
        raise DomainError(f"unknown learner {learner!r}")
    return pre * omega**2 * S * rate_factor(k_n, p_n)


def tree_depth(k_n):
    if not k_n > 2:
        raise DomainError("k_n must exceed 2")
    d = math.ceil(math.log2(k_n))
    # guard against log2 rounding just above an exact power of two
    if 2 ** (d - 1) >= k_n:
        d -= 1
    return d


def dyadic_second_moment(p_nj, d):
    """E[(2^{-K})^2] for K ~ Binomial(d, p_nj)."""
    if not 0 <= p_nj <= 1 or d < 0:
        raise DomainError("need p_nj in [0, 1] and d >= 0")
    return (1 - 0.75 * p_nj) ** d


def fig1_theory_percent_change(gamma_t):
    """Percent MSE change of the ensemble over the merged learner, K=2 balanced."""
    gamma = gamma_t / 2
    if not 0 <= gamma < 0.5:
        raise DomainError("gamma_t must lie in [0, 1)")
    return 100.0 * (1.0 / ols_highdim_ratio(gamma, 2) - 1.0)


def orthogonal_kappa(p=10):
    """Merged / ensemble fixed-p variance ratio for balanced unit orthogonal means."""
    e1, e2 = np.eye(p)[:2]
    n_d1 = 2 * ensemble_variance_limit_d1(p, [1, 1], [1.0, 1.0])
    return merged_variance_limit_d2(p, [0.5, 0.5], [e1, e2]) / n_d1


CALCULATORS = {
    "ols_ratio": ols_highdim_ratio,
    "mp_trace": mp_trace_inverse_limit,
    "scl_qform": scl_qform_limit,
    "d1": ensemble_variance_limit_d1,
    "d2": merged_variance_limit_d2,
    "s1": ensemble_limit_s1,
    "s2_printed": merged_limit_s2_as_printed,
    "s2_exact": merged_limit_s2_exact,
    "cf_bound": cf_bound,
    "cf_bound_general": cf_bound_general,
    "tree_depth": tree_depth,
    "dyadic_second_moment": dyadic_second_moment,
    "fig1_percent": fig1_theory_percent_change,
}

"""Least-squares learners and their exact conditional prediction variances.

All solves go through a Cholesky factor of the Gram matrix; no explicit
inverse is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular

RANK_TOL = 1e-10


class RankDeficient(np.linalg.LinAlgError):
    """The design does not have numerically full column rank."""


@dataclass(frozen=True)
class OlsFit:
    """Fitted OLS model.

    Attributes
    ----------
    coefficients : ndarray, shape (p,)
    gram_factor : ndarray, shape (p, p)
        Lower-triangular L with ``L @ L.T == X.T @ X``.
    n_rows, p_cols : int
    """

    coefficients: np.ndarray
    gram_factor: np.ndarray
    n_rows: int
    p_cols: int

    def predict(self, x_star):
        return predict(self, x_star)

    def qform(self, x_star):
        return _qform_from_factor(self.gram_factor, x_star)


def gram_cholesky(G, rank_tol=RANK_TOL):
    """Lower Cholesky factor of a Gram matrix with a scaled pivot check."""
    G = np.asarray(G, dtype=float)
    p = G.shape[0]
    threshold = rank_tol * np.trace(G) / p
    try:
        L = cholesky(G, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient(f"Gram matrix is not positive definite: {exc}") from None
    pivots = np.diag(L) ** 2
    if not np.all(pivots > threshold):
        j = int(np.argmin(pivots))
        raise RankDeficient(f"pivot {pivots[j]:.3e} at column {j} below {threshold:.3e}")
    return L


def fit_ols(X, Y, rank_tol=RANK_TOL) -> OlsFit:
    """Solve the normal equations ``X'X b = X'Y`` by Cholesky."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, p = X.shape
    if n < p:
        raise RankDeficient(f"n={n} < p={p}")
    if Y.shape != (n,):
        raise ValueError("Y must be a vector matching X's rows")
    L = gram_cholesky(X.T @ X, rank_tol)
    z = solve_triangular(L, X.T @ Y, lower=True)
    beta = solve_triangular(L.T, z, lower=False)
    return OlsFit(beta, L, n, p)


def predict(fit: OlsFit, x_star):
    """x_star' beta_hat for a single point or each row of a matrix."""
    x_star = np.asarray(x_star, dtype=float)
    if x_star.shape[-1] != fit.p_cols:
        raise ValueError(f"expected {fit.p_cols} features, got {x_star.shape[-1]}")
    return x_star @ fit.coefficients


def _qform_from_factor(L, x_star):
    x_star = np.asarray(x_star, dtype=float)
    if x_star.shape[-1] != L.shape[0]:
        raise ValueError("dimension mismatch")
    # v = L^{-1} x, so x' (L L')^{-1} x = |v|^2
    v = solve_triangular(L, x_star.T, lower=True)
    return np.sum(v * v, axis=0)


def qform(X, x_star, rank_tol=RANK_TOL):
    """x_star' (X'X)^{-1} x_star via one triangular solve per point.

    ``X`` may be a design matrix or an :class:`OlsFit`. ``x_star`` may be a
    vector (scalar result) or an m x p matrix (length-m result).
    """
    L = X.gram_factor if isinstance(X, OlsFit) else gram_cholesky(np.asarray(X, float).T @ np.asarray(X, float), rank_tol)
    return _qform_from_factor(L, x_star)


def merged_cond_variance(Xs: Sequence[np.ndarray], x_star, sigma=1.0):
    """Variance of the pooled-OLS prediction given x_star and the designs."""
    G = sum(np.asarray(X, float).T @ np.asarray(X, float) for X in Xs)
    L = gram_cholesky(G)
    return sigma**2 * _qform_from_factor(L, x_star)


def ensemble_opt_cond_variance(Xs: Sequence[np.ndarray], x_star, sigma=1.0):
    """Variance of the optimally weighted ensemble of per-cluster OLS fits.

    Equals sigma^2 times the harmonic combination
    ``1 / sum_t 1 / q_t`` of the per-cluster quadratic forms.
    """
    inv_sum = 0.0
    for X in Xs:
        inv_sum = inv_sum + 1.0 / qform(X, x_star)
    return sigma**2 / inv_sum

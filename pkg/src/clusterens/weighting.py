"""Ensemble weighting schemes and the NNLS solver behind stacking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from clusterens.linmodels import OlsFit, predict

SIMPLEX_TOL = 1e-12


class NonpositiveVariance(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


class AllZeroWeights(RuntimeError):
    pass


@dataclass(frozen=True)
class WeightVector:
    """Weights over K learners.

    ``raw_sum`` keeps the pre-normalization total for schemes (stacking)
    whose raw output is not on the simplex.
    """

    w: np.ndarray
    scheme: str
    normalized: bool = True
    raw_sum: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        if self.normalized and (np.any(w < 0) or abs(w.sum() - 1.0) > SIMPLEX_TOL):
            raise ValueError("normalized weights must lie on the simplex")

    @property
    def K(self):
        return self.w.size

    def __len__(self):
        return self.w.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.w, dtype=dtype)


def _normalize(v):
    v = np.asarray(v, dtype=float)
    w = v / v.sum()
    # push the rounding residue onto the largest entry so the sum is 1
    w[np.argmax(w)] += 1.0 - w.sum()
    return w


def average_weights(K) -> WeightVector:
    if K < 1:
        raise ValueError("K must be positive")
    return WeightVector(_normalize(np.ones(K)), "average")


def ivw_oracle_weights(variances) -> WeightVector:
    """Inverse-variance weights, the simplex minimizer of sum w_t^2 s_t^2."""
    v = np.asarray(variances, dtype=float)
    if np.any(~(v > 0)):
        raise NonpositiveVariance(f"variances must be positive, got {v}")
    return WeightVector(_normalize(1.0 / v), "ivw_oracle")


def heldout_residual_variances(fits: Sequence[OlsFit], X, Y, labels, use_mse=False):
    """Per-learner spread of residuals on rows from the other clusters.

    Learner t (trained on label t+1) is scored on rows whose label differs.
    ``use_mse`` swaps the sample variance for the mean squared residual.
    """
    labels = np.asarray(labels)
    out = np.empty(len(fits))
    for t, fit in enumerate(fits):
        mask = labels != t + 1
        r = Y[mask] - predict(fit, X[mask])
        out[t] = np.mean(r * r) if use_mse else np.var(r, ddof=1)
    return out


def ivw_empirical_weights(fits: Sequence[OlsFit], dataset, use_mse=False) -> WeightVector:
    if len(fits) < 2:
        raise ValueError("empirical IVW needs K >= 2")
    v = heldout_residual_variances(fits, dataset.X, dataset.Y, dataset.labels, use_mse)
    if np.any(v <= 0):
        raise DegenerateVariance(f"held-out residual variance is zero for learner(s) {np.flatnonzero(v <= 0) + 1}")
    return WeightVector(_normalize(1.0 / v), "ivw", meta={"heldout_variance": v.tolist()})


def nnls(A, b, tol=1e-10, max_iter=None):
    """Lawson-Hanson active-set solver for min |Aw - b| subject to w >= 0.

    Parameters
    ----------
    A : ndarray, shape (m, K)
    b : ndarray, shape (m,)
    tol : float
        Relative tolerance on the dual (gradient) used for optimality.
    max_iter : int, optional
        Cap on inner plus outer iterations, default ``10 * K * m``.

    Returns
    -------
    w : ndarray, shape (K,)
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, K = A.shape
    if m < 1:
        raise ValueError("A must have at least one row")
    if max_iter is None:
        max_iter = 10 * K * m
    AtA = A.T @ A
    Atb = A.T @ b
    scale = max(np.max(np.abs(Atb)), np.finfo(float).tiny)
    thresh = tol * scale

    w = np.zeros(K)
    passive = np.zeros(K, dtype=bool)
    grad = Atb - AtA @ w
    it = 0
    while True:
        active_idx = np.flatnonzero(~passive)
        if active_idx.size == 0 or np.max(grad[active_idx]) <= thresh:
            break
        j = active_idx[np.argmax(grad[active_idx])]
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                raise NoConvergence(f"NNLS exceeded {max_iter} iterations")
            P = np.flatnonzero(passive)
            z = np.zeros(K)
            z[P] = np.linalg.lstsq(AtA[np.ix_(P, P)], Atb[P], rcond=None)[0]
            if np.all(z[P] > 0):
                w = z
                break
            neg = P[z[P] <= 0]
            ratios = w[neg] / (w[neg] - z[neg])
            k = int(np.argmin(ratios))
            w = w + ratios[k] * (z - w)
            passive[neg[k]] = False
            passive &= w > 0
            w[~passive] = 0.0
        grad = Atb - AtA @ w
    return w


def nnls_kkt_violation(A, b, w, tol=1e-10):
    """Largest breach of the NNLS optimality conditions (<= 0 means ok).

    Zero coordinates need gradient A'(b - Aw) <= tol * |A'b|_inf; positive
    coordinates need |gradient| <= tol * |A'b|_inf.
    """
    A = np.asarray(A, float)
    g = A.T @ (np.asarray(b, float) - A @ w)
    scale = tol * max(np.max(np.abs(A.T @ b)), np.finfo(float).tiny)
    pos = w > 0
    breach = np.where(pos, np.abs(g), g) - scale
    return float(max(np.max(breach), -np.min(w)))


def prediction_matrix(fits: Sequence[OlsFit], X):
    return np.column_stack([predict(f, X) for f in fits])


def stacking_weights(fits: Sequence[OlsFit], dataset, withhold_own_cluster=True, normalize=True, tol=1e-10) -> WeightVector:
    """NNLS of Y on the learners' predictions.

    With ``withhold_own_cluster`` the entry for learner t on its own
    training rows is zeroed, so each learner is rewarded only for how it
    predicts the other clusters.
    """
    K = len(fits)
    if K < 2:
        raise ValueError("stacking needs K >= 2")
    P = prediction_matrix(fits, dataset.X)
    if withhold_own_cluster:
        own = np.asarray(dataset.labels)[:, None] == np.arange(1, K + 1)[None, :]
        P = np.where(own, 0.0, P)
    raw = nnls(P, dataset.Y, tol=tol)
    total = float(raw.sum())
    if normalize:
        if not total > 0:
            raise AllZeroWeights("NNLS returned the zero vector")
        return WeightVector(_normalize(raw), "stacking", True, total, {"raw": raw.tolist()})
    return WeightVector(raw, "stacking", False, total, {"raw": raw.tolist()})


def ensemble_predict(fits: Sequence[OlsFit], weights, x_star):
    w = np.asarray(weights, dtype=float)
    if w.size != len(fits):
        raise ValueError(f"{w.size} weights for {len(fits)} learners")
    if np.ndim(x_star) > 1:
        return prediction_matrix(fits, x_star) @ w
    return float(sum(wt * predict(f, x_star) for wt, f in zip(w, fits)))

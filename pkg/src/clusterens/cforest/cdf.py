"""Coordinate-wise marginal CDFs used to move between data and quantile space."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from clusterens.datagen import LAPLACE_SCALE, ClusterSpec

# largest double below 1, so u * 2^c never rounds a point into a new cell
_U_MAX = np.nextafter(1.0, 0.0)


class OutOfSupport(ValueError):
    pass


@dataclass(frozen=True)
class MarginalCDF:
    """Equal-weight mixture of per-coordinate marginals.

    Parameters
    ----------
    family : {"uniform", "gaussian", "laplace", "linear"}
        ``uniform`` components are ``U(loc, loc + width)``; gaussian and
        laplace components are unit variance centred at ``loc``.
        ``linear`` is a single uniform over ``[loc, loc + width]`` used for
        midpoint splits in data space.
    locs : ndarray, shape (C, p)
    width : float or ndarray, shape (p,)
    """

    family: str
    locs: np.ndarray
    width: object = 0.5

    def __post_init__(self):
        locs = np.atleast_2d(np.asarray(self.locs, dtype=float))
        locs.setflags(write=False)
        object.__setattr__(self, "locs", locs)
        width = np.broadcast_to(np.asarray(self.width, dtype=float), (locs.shape[1],)).copy()
        width.setflags(write=False)
        object.__setattr__(self, "width", width)

    @property
    def p(self):
        return self.locs.shape[1]

    @property
    def n_components(self):
        return self.locs.shape[0]

    @property
    def piecewise_linear(self):
        return self.family in ("uniform", "linear")

    def support(self):
        """Per-coordinate (lower, upper) support endpoints."""
        if self.piecewise_linear:
            return self.locs.min(axis=0), (self.locs + self.width).max(axis=0)
        return np.full(self.p, -np.inf), np.full(self.p, np.inf)

    def cdf(self, X):
        """Quantile coordinates of each row of X, clipped into [0, 1)."""
        X = np.asarray(X, dtype=float)
        U = np.zeros(X.shape)
        for loc in self.locs:
            if self.piecewise_linear:
                U += np.clip((X - loc) / self.width, 0.0, 1.0)
            elif self.family == "gaussian":
                U += stats.norm.cdf(X - loc)
            else:
                U += stats.laplace.cdf(X - loc, scale=LAPLACE_SCALE)
        U /= self.n_components
        return np.minimum(U, _U_MAX)

    def _breakpoints(self, j):
        xs = np.unique(np.concatenate([self.locs[:, j], self.locs[:, j] + self.width[j]]))
        Fs = np.clip((xs[:, None] - self.locs[:, j]) / self.width[j], 0, 1).mean(axis=1)
        return xs, Fs

    def lower(self, t, j):
        """sup{x : F_j(x) <= t}; the left edge of the cell starting at t."""
        if self.piecewise_linear:
            xs, Fs = self._breakpoints(j)
            k = int(np.searchsorted(Fs, t, side="right")) - 1
            if k < 0:
                return xs[0]
            if k >= len(xs) - 1:
                return xs[-1]
            return xs[k] + (t - Fs[k]) / (Fs[k + 1] - Fs[k]) * (xs[k + 1] - xs[k])
        return self._smooth_inverse(t, j)

    def upper(self, s, j):
        """inf{x : F_j(x) >= s}; the right edge of the cell ending at s."""
        if self.piecewise_linear:
            xs, Fs = self._breakpoints(j)
            k = int(np.searchsorted(Fs, s, side="left"))
            if k <= 0:
                return xs[0]
            if k >= len(xs):
                return xs[-1]
            return xs[k - 1] + (s - Fs[k - 1]) / (Fs[k] - Fs[k - 1]) * (xs[k] - xs[k - 1])
        return self._smooth_inverse(s, j)

    def _smooth_inverse(self, u, j):
        if u <= 0:
            return -np.inf
        if u >= 1:
            return np.inf
        lo = self.locs[:, j].min() - 50
        hi = self.locs[:, j].max() + 50
        f = lambda x: float(self.cdf(np.full((1, self.p), x))[0, j]) - u  # noqa: E731
        return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    def inverse(self, u, j):
        return self.upper(u, j)

    def check_support(self, x):
        lo, hi = self.support()
        x = np.asarray(x, dtype=float)
        if np.any(x < lo) or np.any(x > hi):
            raise OutOfSupport(f"point {x} lies outside [{lo}, {hi}]")

    def to_dict(self):
        return {"family": self.family, "locs": self.locs.tolist(), "width": self.width.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], np.asarray(d["locs"]), np.asarray(d["width"]))

    @classmethod
    def for_clusters(cls, clusters: Sequence[ClusterSpec], split_space="quantile"):
        """Mixture CDF of the given clusters (one cluster gives its own CDF).

        ``split_space="data"`` returns a linear CDF over a bounding box so
        splits fall at data-space midpoints instead.
        """
        family = clusters[0].family
        if any(c.family != family for c in clusters):
            raise ValueError("clusters must share a family")
        if family == "uniform":
            locs = np.array([c.start for c in clusters])
            widths = {float(c.width) for c in clusters}
            if len(widths) != 1:
                raise ValueError("uniform clusters must share a width")
            q = cls("uniform", locs, widths.pop())
        else:
            q = cls(family, np.array([c.mean for c in clusters]))
        if split_space == "quantile":
            return q
        if split_space != "data":
            raise ValueError(f"unknown split_space {split_space!r}")
        if q.piecewise_linear:
            lo, hi = q.support()
        else:
            lo = np.array([q.lower(1e-3, j) for j in range(q.p)])
            hi = np.array([q.upper(1 - 1e-3, j) for j in range(q.p)])
        return cls("linear", lo[None, :], hi - lo)

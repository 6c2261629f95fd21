"""Data-independent dyadic trees over quantile space."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from clusterens._util import make_rng
from clusterens.cforest.cdf import MarginalCDF
from clusterens.theory import tree_depth  # noqa: F401  (re-exported)

MAX_DEPTH = 24


@dataclass(frozen=True)
class SplitScheme:
    """How a split coordinate is chosen at each node.

    ``explicit_probs`` draws from ``probs``. ``mtry_with_replacement`` draws
    ``M`` coordinates with replacement, then picks uniformly among the
    distinct strong ones drawn, or uniformly among all M when none is strong.
    """

    mode: str
    p: int
    probs: Optional[np.ndarray] = None
    strong_set: tuple = ()
    M: int = 1

    def __post_init__(self):
        if self.mode == "explicit_probs":
            probs = np.asarray(self.probs, dtype=float)
            if probs.shape != (self.p,) or np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
                raise ValueError("probs must be a length-p probability vector")
            probs.setflags(write=False)
            object.__setattr__(self, "probs", probs)
        elif self.mode == "mtry_with_replacement":
            if self.M < 1:
                raise ValueError("M must be at least 1")
        else:
            raise ValueError(f"unknown split mode {self.mode!r}")
        object.__setattr__(self, "strong_set", tuple(int(j) for j in self.strong_set))

    @classmethod
    def idealized(cls, p, strong: Sequence[int]):
        """Probability 1/S on each strong coordinate and 0 elsewhere."""
        probs = np.zeros(p)
        probs[list(strong)] = 1.0 / len(strong)
        return cls("explicit_probs", p, probs, tuple(strong))

    @classmethod
    def mtry(cls, p, strong: Sequence[int], M):
        return cls("mtry_with_replacement", p, None, tuple(strong), int(M))

    def to_dict(self):
        d = {"mode": self.mode, "p": self.p, "strong_set": list(self.strong_set), "M": self.M}
        if self.probs is not None:
            d["probs"] = self.probs.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["mode"], int(d["p"]), d.get("probs"), tuple(d.get("strong_set", ())), int(d.get("M", 1)))


def sample_split_coords(scheme: SplitScheme, rng, size):
    """Vectorized draw of ``size`` split coordinates."""
    if scheme.mode == "explicit_probs":
        u = rng.random(size)
        cdf = np.cumsum(scheme.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="right")
        # skip zero-probability coordinates that share a cdf value
        return np.minimum(idx, scheme.p - 1).astype(np.intc)
    draws = rng.integers(0, scheme.p, size=(size, scheme.M))
    pick = rng.random(size)
    strong = np.zeros(scheme.p, dtype=bool)
    strong[list(scheme.strong_set)] = True
    out = np.empty(size, dtype=np.intc)
    for i in range(size):
        row = draws[i]
        cand = np.unique(row[strong[row]])
        if cand.size == 0:
            cand = row
        out[i] = cand[int(pick[i] * cand.size)]
    return out


def sample_split_coord(scheme: SplitScheme, rng):
    return int(sample_split_coords(scheme, rng, 1)[0])


@dataclass(frozen=True)
class CenteredTree:
    """Full binary tree of the given depth, nodes in heap order.

    ``coords[i]`` is the coordinate split at node i; each split halves that
    coordinate's current dyadic quantile interval.
    """

    depth: int
    coords: np.ndarray
    seed: int
    p: int

    @property
    def n_leaves(self):
        return 1 << self.depth

    def path(self, u):
        """Split counts K_j and the quantile cell [t_j, s_j) containing u."""
        u = np.minimum(np.asarray(u, dtype=float), np.nextafter(1.0, 0.0))
        counts = np.zeros(self.p, dtype=np.int64)
        node = 0
        for _ in range(self.depth):
            j = int(self.coords[node])
            bit = int(np.floor(np.ldexp(u[j], int(counts[j]) + 1))) & 1
            counts[j] += 1
            node = 2 * node + 1 + bit
        t = np.floor(np.ldexp(u, counts)) / np.ldexp(1.0, counts)
        s = t + np.ldexp(1.0, -counts)
        return counts, t, s

    def leaf_index(self, U):
        from clusterens.cforest._backend import kernels

        return kernels.leaf_index(np.ascontiguousarray(U, dtype=float), self.coords, self.depth)


def build_tree(depth, scheme: SplitScheme, seed) -> CenteredTree:
    """Draw every node's split coordinate from ``scheme``; no data involved."""
    if not 0 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [0, {MAX_DEPTH}]")
    rng = make_rng(seed)
    n_internal = (1 << depth) - 1
    coords = sample_split_coords(scheme, rng, n_internal) if n_internal else np.zeros(0, dtype=np.intc)
    coords = np.ascontiguousarray(coords, dtype=np.intc)
    coords.setflags(write=False)
    return CenteredTree(int(depth), coords, int(seed), scheme.p)


def leaf_box(tree: CenteredTree, cdf: MarginalCDF, x_star):
    """Data-space box ``[(a_j, b_j)]`` of the leaf holding ``x_star``.

    Also returns the split counts per coordinate.
    """
    x_star = np.asarray(x_star, dtype=float)
    cdf.check_support(x_star)
    u = cdf.cdf(x_star[None, :])[0]
    counts, t, s = tree.path(u)
    box = np.array([[cdf.lower(t[j], j), cdf.upper(s[j], j)] for j in range(tree.p)])
    return box, counts

"""Centered forests and the merged / cluster-wise ensemble predictors."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from clusterens._util import mix_seed
from clusterens.cforest import _backend
from clusterens.cforest.cdf import MarginalCDF
from clusterens.cforest.tree import CenteredTree, SplitScheme, build_tree


@dataclass(frozen=True)
class CenteredForest:
    """B data-independent trees; tree b is seeded with mix(seed, b)."""

    B: int
    depth: int
    scheme: SplitScheme
    seed: int = 0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be at least 1")

    def tree_seed(self, b):
        return mix_seed(self.seed, b)

    def tree(self, b) -> CenteredTree:
        return build_tree(self.depth, self.scheme, self.tree_seed(b))

    @cached_property
    def coords(self):
        """(B, 2**depth - 1) matrix of split coordinates."""
        n_internal = (1 << self.depth) - 1
        out = np.zeros((self.B, max(n_internal, 1)), dtype=np.intc)
        for b in range(self.B):
            out[b, :n_internal] = self.tree(b).coords
        out.setflags(write=False)
        return out

    def to_dict(self):
        return {"B": self.B, "depth": self.depth, "scheme": self.scheme.to_dict(), "seed": int(self.seed)}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["B"]), int(d["depth"]), SplitScheme.from_dict(d["scheme"]), int(d["seed"]))

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def leaf_means(forest: CenteredForest, cdf: MarginalCDF, X_train, Z, X_test):
    """Forest average of leaf means of the columns of Z at X_test."""
    Z = np.asarray(Z, dtype=float)
    vector = Z.ndim == 1
    Z = np.ascontiguousarray(Z.reshape(len(Z), -1))
    U_train = np.ascontiguousarray(cdf.cdf(X_train))
    U_test = np.ascontiguousarray(cdf.cdf(np.atleast_2d(X_test)))
    out = _backend.kernels.forest_leaf_mean(U_train, Z, U_test, forest.coords, forest.depth)
    return out[:, 0] if vector else out


def tree_predict(tree: CenteredTree, cdf: MarginalCDF, X_train, Y, X_test):
    """Mean response in the leaf of each test point, 0 for empty leaves."""
    leaf_tr = tree.leaf_index(cdf.cdf(X_train))
    leaf_te = tree.leaf_index(cdf.cdf(np.atleast_2d(X_test)))
    cnt = np.bincount(leaf_tr, minlength=tree.n_leaves)
    sums = np.bincount(leaf_tr, weights=np.asarray(Y, float), minlength=tree.n_leaves)
    c = cnt[leaf_te]
    return np.where(c > 0, sums[leaf_te] / np.maximum(c, 1), 0.0)


def forest_predict(forest: CenteredForest, cdf: MarginalCDF, X_train, Y, X_test):
    return leaf_means(forest, cdf, X_train, Y, X_test)


def ensemble_forest_predict(forests: Sequence[CenteredForest], cdfs: Sequence[MarginalCDF], datasets, X_test, membership, Z=None):
    """Each test point is predicted by the forest of its own cluster.

    ``datasets`` is a sequence of ``(X_t, Y_t)`` pairs; ``membership`` holds
    cluster ids 1..K. ``Z`` optionally replaces the responses with
    per-cluster matrices (used for bias estimation).
    """
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    membership = np.asarray(membership)
    out = None
    for t, (forest, cdf, (X_t, Y_t)) in enumerate(zip(forests, cdfs, datasets), start=1):
        idx = np.flatnonzero(membership == t)
        resp = Y_t if Z is None else Z[t - 1]
        if out is None:
            shape = (len(X_test),) + np.shape(resp)[1:]
            out = np.zeros(shape)
        if idx.size:
            out[idx] = leaf_means(forest, cdf, X_t, resp, X_test[idx])
    return out


def merged_forest_predict(forest: CenteredForest, cdf: MarginalCDF, X, Y, X_test):
    """Forest on the pooled data with the mixture CDF's quantile geometry."""
    return leaf_means(forest, cdf, X, Y, X_test)

"""Seedable generators for clustered covariates, sparse linear outcomes
and test points.

Gaussian draws use numpy's ``Generator.standard_normal`` (ziggurat method
on the PCG64 bit generator). Ports to other languages should reproduce
moments, not bits.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from clusterens._util import make_rng, mix_seed

FAMILIES = ("gaussian", "uniform", "laplace")
LAPLACE_SCALE = 1.0 / np.sqrt(2.0)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ClusterSpec:
    """One cluster of covariates.

    ``mean`` is used by the gaussian and laplace families, ``start`` and
    ``width`` by the uniform family, whose rows are i.i.d.
    ``U(start_j, start_j + width)`` per coordinate.
    """

    family: str
    n_t: int
    p: int
    mean: Optional[np.ndarray] = None
    start: Optional[np.ndarray] = None
    width: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if int(self.n_t) < 1 or int(self.p) < 1:
            raise ValueError("n_t and p must be positive")
        if self.family == "uniform":
            if not (self.width > 0 and np.isfinite(self.width)):
                raise ValueError("uniform width must be positive and finite")
            start = np.zeros(self.p) if self.start is None else self.start
            object.__setattr__(self, "start", _frozen(np.broadcast_to(start, (self.p,))))
        else:
            mean = np.zeros(self.p) if self.mean is None else self.mean
            object.__setattr__(self, "mean", _frozen(np.broadcast_to(mean, (self.p,))))
        for arr in (self.mean, self.start):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError("cluster parameters must be finite")

    @property
    def center(self):
        if self.family == "uniform":
            return self.start + self.width / 2
        return self.mean

    def to_dict(self):
        d = {"family": self.family, "n_t": int(self.n_t), "p": int(self.p)}
        if self.family == "uniform":
            d.update(start=self.start.tolist(), width=float(self.width))
        else:
            d["mean"] = self.mean.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"],
            n_t=int(d["n_t"]),
            p=int(d["p"]),
            mean=d.get("mean"),
            start=d.get("start"),
            width=float(d.get("width", 0.5)),
        )


@dataclass(frozen=True)
class OutcomeSpec:
    beta: np.ndarray
    support: tuple
    noise_sd: float = 1.0
    per_cluster_sign_flip: bool = False

    def __post_init__(self):
        beta = _frozen(self.beta)
        support = tuple(int(j) for j in self.support)
        off = np.ones(beta.size, dtype=bool)
        off[list(support)] = False
        if np.any(beta[off] != 0):
            raise ValueError("beta must vanish off the support")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "support", support)

    def signal(self, X, labels=None):
        """Noiseless regression function f(x) for each row of X."""
        f = np.asarray(X, dtype=float) @ self.beta
        if self.per_cluster_sign_flip and labels is not None:
            f = np.where(np.asarray(labels) == 2, -f, f)
        return f

    def to_dict(self):
        return {
            "beta": self.beta.tolist(),
            "support": list(self.support),
            "noise_sd": float(self.noise_sd),
            "per_cluster_sign_flip": bool(self.per_cluster_sign_flip),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["beta"], dtype=float),
            tuple(d["support"]),
            float(d.get("noise_sd", 1.0)),
            bool(d.get("per_cluster_sign_flip", False)),
        )


@dataclass(frozen=True)
class Dataset:
    """Merged training data. ``labels`` holds cluster ids 1..K."""

    X: np.ndarray
    Y: np.ndarray
    labels: np.ndarray
    spec: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        X = _frozen(self.X)
        Y = _frozen(self.Y)
        labels = np.array(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        if X.ndim != 2 or Y.shape != (X.shape[0],) or labels.shape != Y.shape:
            raise ValueError("inconsistent dataset shapes")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def K(self):
        return int(self.labels.max()) if self.labels.size else 0

    def cluster(self, t):
        """Rows belonging to cluster ``t`` as ``(X_t, Y_t)``."""
        mask = self.labels == t
        return self.X[mask], self.Y[mask]

    def subset(self, t):
        X_t, Y_t = self.cluster(t)
        return Dataset(X_t, Y_t, np.ones(len(Y_t), dtype=np.int64), self.spec, self.seed)

    def to_csv(self, path):
        path = Path(path)
        header = [f"x{j + 1}" for j in range(self.p)] + ["y", "label"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for x, y, lab in zip(self.X, self.Y, self.labels):
                w.writerow([repr(float(v)) for v in x] + [repr(float(y)), int(lab)])
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps({"spec": self.spec, "seed": int(self.seed)}, indent=2, sort_keys=True))
        return path, sidecar

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = {}
        sidecar = path.with_suffix(".json")
        if sidecar.exists():
            meta = json.loads(sidecar.read_text())
        return cls(raw[:, :-2], raw[:, -2], raw[:, -1].astype(np.int64), meta.get("spec", {}), meta.get("seed", 0))


@dataclass(frozen=True)
class TestPoint:
    __test__ = False

    x_star: np.ndarray
    membership: int


@dataclass(frozen=True)
class TestSet:
    """A batch of test points stored column-wise for vectorized use."""

    __test__ = False

    X: np.ndarray
    membership: np.ndarray

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i):
        return TestPoint(self.X[i], int(self.membership[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def gen_cluster(spec: ClusterSpec, seed) -> np.ndarray:
    """Draw ``spec.n_t`` i.i.d. rows from the cluster's family."""
    rng = make_rng(seed)
    shape = (int(spec.n_t), int(spec.p))
    if spec.family == "gaussian":
        return spec.mean + rng.standard_normal(shape)
    if spec.family == "laplace":
        return spec.mean + rng.laplace(0.0, LAPLACE_SCALE, size=shape)
    return spec.start + spec.width * rng.random(shape)


def gen_means_on_sphere(K, p, radius=1.0, seed=0) -> np.ndarray:
    """K means with norm ``radius`` and uniformly distributed directions."""
    if radius < 0 or p < 1:
        raise ValueError("need radius >= 0 and p >= 1")
    rng = make_rng(seed)
    v = rng.standard_normal((K, p))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v / norms


def diagonal_layout(K, p, spacing):
    """Cluster offsets ``t * spacing`` along the all-ones direction."""
    return np.outer(np.arange(K) * float(spacing), np.ones(p))


def uniform_clusters(K, p, n_t, width=0.5, spacing=1.0):
    """Uniform clusters ``[t*spacing, t*spacing + width]^p``, t = 0..K-1.

    With the defaults and K=2 this is the ``U(0, 1/2)`` / ``U(1, 3/2)`` pair.
    """
    starts = diagonal_layout(K, p, spacing)
    return [ClusterSpec("uniform", n_t, p, start=starts[t], width=width) for t in range(K)]


def gen_beta(p, S, seed=0, support=None, noise_sd=1.0, per_cluster_sign_flip=False) -> OutcomeSpec:
    """Sparse coefficients: N(0, 1) entries on ``support`` (default first S)."""
    if not 1 <= S <= p:
        raise ValueError("need 1 <= S <= p")
    support = tuple(range(S)) if support is None else tuple(support)
    if len(support) != S:
        raise ValueError("support size must equal S")
    rng = make_rng(seed)
    beta = np.zeros(p)
    beta[list(support)] = rng.standard_normal(S)
    return OutcomeSpec(beta, support, noise_sd, per_cluster_sign_flip)


def gen_outcome(X, outcome: OutcomeSpec, labels=None, seed=0) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[1] != outcome.beta.size:
        raise ValueError(f"X has {X.shape[1]} columns but beta has {outcome.beta.size}")
    rng = make_rng(seed)
    noise = outcome.noise_sd * rng.standard_normal(X.shape[0])
    return outcome.signal(X, labels) + noise


def make_dataset(clusters: Sequence[ClusterSpec], outcome: OutcomeSpec, seed=0) -> Dataset:
    """Generate all clusters and outcomes from one master seed."""
    blocks = [gen_cluster(c, mix_seed(seed, 0, t)) for t, c in enumerate(clusters)]
    X = np.vstack(blocks)
    labels = np.concatenate([np.full(c.n_t, t + 1, dtype=np.int64) for t, c in enumerate(clusters)])
    Y = gen_outcome(X, outcome, labels, mix_seed(seed, 1))
    spec = {"clusters": [c.to_dict() for c in clusters], "outcome": outcome.to_dict()}
    return Dataset(X, Y, labels, spec, int(seed))


def gen_testpoints(clusters: Optional[Sequence[ClusterSpec]], m, seed=0, standard_normal=False, p=None) -> TestSet:
    """Mixture test points with uniform membership, or N(0, I) points.

    In standard-normal mode ``clusters`` may be None (pass ``p``); the
    membership column is then drawn but ignored by the covariates.
    """
    if m < 1:
        raise ValueError("m must be positive")
    rng = make_rng(seed)
    K = 1 if clusters is None else len(clusters)
    membership = rng.integers(1, K + 1, size=m)
    if standard_normal:
        dim = p if p is not None else clusters[0].p
        return TestSet(rng.standard_normal((m, dim)), membership)
    X = np.empty((m, clusters[0].p))
    for t, c in enumerate(clusters, start=1):
        idx = np.flatnonzero(membership == t)
        if idx.size:
            spec = ClusterSpec(c.family, idx.size, c.p, c.mean, c.start, c.width)
            X[idx] = gen_cluster(spec, mix_seed(seed, 2, t))
    return TestSet(X, membership)

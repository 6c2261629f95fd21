"""Monte Carlo experiments: Table 1, Figure 1, Figure 2, bias and variance checks.

Every replicate draws its randomness from ``mix_seed(master, grid_index,
replicate)``, so results do not depend on the number of workers or on
the order in which replicates finish.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from clusterens import datagen, linmodels, theory, weighting
from clusterens._util import fmean, fsum, mix_seed
from clusterens.cforest import (
    BACKEND,
    CenteredForest,
    MarginalCDF,
    SplitScheme,
    ensemble_forest_predict,
    merged_forest_predict,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = ["experiment", "family", "grid_value", "replicate", "scheme", "metric", "value"]
SCHEMA_VERSION = 1

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "table1": dict(
        replicates=100, K=5, n_t=200, p=10, sigma=1.0, radius=1.0, m=1000, test_clusters=2,
        test_means="reuse", rmse_target="observed", withhold_own_cluster=True, use_mse=False,
    ),
    "fig1": dict(
        replicates=100, K=2, n_t=400, grid=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], sigma=1.0,
        radius=1.0, m=1000, test_mode="standard_normal", rmse_target="signal", schemes=["ivw"],
        opposite_coefficients=False, use_mse=False,
    ),
    "fig2": dict(
        replicates=20, families=["uniform", "gaussian", "laplace"], grid=[2, 4, 8, 16], n_total=16384,
        p=3, S=3, k_n=64, B=100, sigma=1.0, m=1000, width=0.5, spacing=1.0, rmse_target="signal",
        split_space="quantile",
    ),
    "bias_bound": dict(
        replicates=20, K=2, p=3, S=3, k_n=64, n=2000, B=200, R_d=100, m=500, width=0.5, spacing=1.0,
        marginalize_beta=True, sigma=0.0, split_space="quantile",
    ),
    "variance_check": dict(
        replicates=200, K=2, n=4000, p=10, sigma=1.0, means="orthogonal", radius=1.0, m=1000,
        test_mode="standard_normal",
    ),
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    workers: int = 1
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        merged = dict(DEFAULTS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged.update(self.params)
        self.params = merged
        if int(self.params["replicates"]) < 1:
            raise ValueError("replicates must be at least 1")
        if "grid" in self.params and not self.params["grid"]:
            raise ValueError("grid must be nonempty")
        if self.kind == "fig1":
            bad = [g for g in self.params["grid"] if not 0 < g < 1]
            if bad:
                raise ValueError(f"fig1 grid values must satisfy 0 < p/n_t < 1, got {bad}")

    @property
    def R(self):
        return int(self.params["replicates"])

    def __getitem__(self, key):
        return self.params[key]

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        schema = d.pop("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema {schema}")
        return cls(d.pop("kind"), int(d.pop("seed", 0)), int(d.pop("workers", 1)), d.pop("params", {}))

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return {"schema": SCHEMA_VERSION, "kind": self.kind, "seed": self.seed, "workers": self.workers, "params": self.params}


@dataclass(frozen=True)
class Record:
    experiment: str
    family: str
    grid_value: float
    replicate: int
    scheme: str
    metric: str
    value: float

    def row(self):
        return [self.experiment, self.family, _fmt(self.grid_value), self.replicate, self.scheme, self.metric, _fmt(self.value)]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class ExperimentResult:
    experiment: str
    records: List[Record]
    summary: Dict[str, Any] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)
    weights: List[tuple] = field(default_factory=list)

    def select(self, **match):
        return [r for r in self.records if all(getattr(r, k) == v for k, v in match.items())]

    def values(self, **match):
        return np.array([r.value for r in self.select(**match)])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.records:
                w.writerow(r.row())
        return Path(path)

    def write_weights_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "scheme", "cluster", "weight"])
            for rep, scheme, cluster, weight in self.weights:
                w.writerow([rep, scheme, cluster, _fmt(weight)])
        return Path(path)

    def to_json(self, include_runtime=False):
        meta = dict(self.meta)
        if not include_runtime:
            meta.pop("runtime_seconds", None)
        return json.dumps({"experiment": self.experiment, "summary": self.summary, "meta": meta}, indent=2, sort_keys=True, default=_json_default)

    def write_json(self, path, include_runtime=False):
        Path(path).write_text(self.to_json(include_runtime))
        return Path(path)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def aggregate(values) -> Dict[str, float]:
    """Mean, sample sd, normal 95% CI and empirical 2.5/97.5% quantiles."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("cannot aggregate an empty set of records")
    R = len(vals)
    mean = fsum(vals) / R
    sd = math.sqrt(fsum((v - mean) ** 2 for v in vals) / (R - 1)) if R > 1 else 0.0
    half = 1.96 * sd / math.sqrt(R)
    q = np.quantile(vals, [0.025, 0.975])
    return {"n": R, "mean": mean, "sd": sd, "ci_low": mean - half, "ci_high": mean + half, "q025": float(q[0]), "q975": float(q[1])}


def jackknife_se(values):
    """Jackknife standard error of the mean of i.i.d. replicate estimates."""
    x = np.asarray(values, dtype=float)
    R = x.size
    if R < 2:
        return float("nan")
    loo = (x.sum() - x) / (R - 1)
    return float(math.sqrt((R - 1) / R * np.sum((loo - loo.mean()) ** 2)))


def _run_tasks(fn: Callable, tasks: Sequence, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _finish(name, cfg, records, summary, t0, weights=None):
    config = cfg.to_dict()
    config.pop("workers")  # outputs must not depend on the worker count
    meta = {"config": config, "backend": BACKEND, "runtime_seconds": time.perf_counter() - t0}
    return ExperimentResult(name, records, summary, meta, weights or [])


# ---------------------------------------------------------------- OLS helpers


def _gaussian_clusters(K, n_t, p, means):
    return [datagen.ClusterSpec("gaussian", n_t, p, mean=means[t]) for t in range(K)]


def _fit_all(ds, K):
    fits = [linmodels.fit_ols(*ds.cluster(t)) for t in range(1, K + 1)]
    return linmodels.fit_ols(ds.X, ds.Y), fits


def _stacking(fits, ds, withhold=True):
    """Stacking weights, or equal weights when NNLS returns the zero vector."""
    try:
        return weighting.stacking_weights(fits, ds, withhold)
    except weighting.AllZeroWeights:
        log.warning("stacking returned all-zero weights; using equal weights")
        w = weighting.average_weights(len(fits))
        return weighting.WeightVector(w.w, "stacking", True, 0.0, {"fallback": "average"})


def _rmse(pred, y):
    return math.sqrt(fmean(((pred - y) ** 2).tolist()))


# ----------------------------------------------------------------- Table 1


def _table1_replicate(args):
    cfg, r = args
    P = cfg.params
    K, p, n_t = P["K"], P["p"], P["n_t"]
    seed = mix_seed(cfg.seed, 0, r)
    means = datagen.gen_means_on_sphere(K, p, P["radius"], mix_seed(seed, 0))
    clusters = _gaussian_clusters(K, n_t, p, means)
    outcome = datagen.gen_beta(p, p, mix_seed(seed, 1), noise_sd=P["sigma"])
    ds = datagen.make_dataset(clusters, outcome, mix_seed(seed, 2))
    merged, fits = _fit_all(ds, K)

    n_test = P["test_clusters"]
    if P["test_means"] == "reuse":
        test_means = means[:n_test]
    else:
        test_means = datagen.gen_means_on_sphere(n_test, p, P["radius"], mix_seed(seed, 3))
    ts = datagen.gen_testpoints(_gaussian_clusters(n_test, n_t, p, test_means), P["m"], mix_seed(seed, 4))
    y = outcome.signal(ts.X)
    if P["rmse_target"] == "observed":
        y = datagen.gen_outcome(ts.X, outcome, None, mix_seed(seed, 5))

    w = {
        "average": weighting.average_weights(K),
        "ivw": weighting.ivw_empirical_weights(fits, ds, P["use_mse"]),
        "stacking": _stacking(fits, ds, P["withhold_own_cluster"]),
    }
    out = [("merged", "rmse", _rmse(linmodels.predict(merged, ts.X), y))]
    for name in ("average", "ivw", "stacking"):
        out.append((name, "rmse", _rmse(weighting.ensemble_predict(fits, w[name], ts.X), y)))
    order = np.argsort(w["ivw"].w, kind="stable")
    for name in ("ivw", "stacking"):
        for rank, t in enumerate(order, start=1):
            out.append((name, f"weight_rank{rank}", float(w[name].w[t])))
    raw = [(name, t + 1, float(w[name].w[t])) for name in ("ivw", "stacking") for t in range(K)]
    return out, raw, w["stacking"].raw_sum


def run_table1(cfg: ExperimentConfig) -> ExperimentResult:
    """OLS on K Gaussian clusters: RMSE of merged vs three ensembles, plus weights.

    Weights are reported per rank, clusters being ordered by their IVW
    weight within each replicate.
    """
    t0 = time.perf_counter()
    outs = _run_tasks(_table1_replicate, [(cfg, r) for r in range(cfg.R)], cfg.workers)
    records, weights, raw_sums = [], [], []
    for r, (out, raw, raw_sum) in enumerate(outs):
        records += [Record("table1", "gaussian", cfg["K"], r, s, m, v) for s, m, v in out]
        weights += [(r, s, c, v) for s, c, v in raw]
        raw_sums.append(raw_sum)
    summary = _summarize(records)
    merged = summary["gaussian"][str(cfg["K"])]["merged"]["rmse"]["mean"]
    summary["relative_rmse_gap"] = {
        s: summary["gaussian"][str(cfg["K"])][s]["rmse"]["mean"] / merged - 1 for s in ("average", "ivw", "stacking")
    }
    summary["stacking_raw_sum"] = aggregate(raw_sums)
    return _finish("table1", cfg, records, summary, t0, weights)


def _summarize(records):
    groups: Dict[tuple, list] = {}
    for rec in records:
        groups.setdefault((rec.family, _key(rec.grid_value), rec.scheme, rec.metric), []).append(rec.value)
    out: Dict[str, Any] = {}
    for (fam, g, s, m), vals in groups.items():
        out.setdefault(fam, {}).setdefault(g, {}).setdefault(s, {})[m] = aggregate(vals)
    return out


def _key(g):
    g = float(g)
    return str(int(g)) if g.is_integer() else repr(g)


# ----------------------------------------------------------------- Figure 1


def _fig1_replicate(args):
    cfg, gi, r = args
    P = cfg.params
    K, n_t = P["K"], P["n_t"]
    gamma_t = P["grid"][gi]
    p = int(round(gamma_t * n_t))
    seed = mix_seed(cfg.seed, gi, r)
    means = datagen.gen_means_on_sphere(K, p, P["radius"], mix_seed(seed, 0))
    clusters = _gaussian_clusters(K, n_t, p, means)
    outcome = datagen.gen_beta(p, p, mix_seed(seed, 1), noise_sd=P["sigma"], per_cluster_sign_flip=P["opposite_coefficients"])
    ds = datagen.make_dataset(clusters, outcome, mix_seed(seed, 2))
    try:
        merged, fits = _fit_all(ds, K)
    except linmodels.RankDeficient as exc:
        log.warning("fig1 grid point p=%d replicate %d skipped: %s", p, r, exc)
        return None
    ts = datagen.gen_testpoints(clusters, P["m"], mix_seed(seed, 3), standard_normal=P["test_mode"] == "standard_normal")
    labels = ts.membership if P["opposite_coefficients"] else None
    y = outcome.signal(ts.X, labels)
    if P["rmse_target"] == "observed":
        y = datagen.gen_outcome(ts.X, outcome, labels, mix_seed(seed, 4))
    mse_m = fmean(((linmodels.predict(merged, ts.X) - y) ** 2).tolist())
    out = [("merged", "mse", mse_m)]
    makers = {
        "ivw": lambda: weighting.ivw_empirical_weights(fits, ds, P["use_mse"]),
        "average": lambda: weighting.average_weights(K),
        "stacking": lambda: _stacking(fits, ds),
    }
    for name in P["schemes"]:
        pred = weighting.ensemble_predict(fits, makers[name](), ts.X)
        mse = fmean(((pred - y) ** 2).tolist())
        out += [(name, "mse", mse), (name, "percent_change", 100.0 * (mse / mse_m - 1.0))]
    return out


def run_fig1(cfg: ExperimentConfig) -> ExperimentResult:
    """Percent change in test MSE of the ensemble over the merged OLS fit."""
    t0 = time.perf_counter()
    grid = cfg["grid"]
    tasks = [(cfg, gi, r) for gi in range(len(grid)) for r in range(cfg.R)]
    outs = _run_tasks(_fig1_replicate, tasks, cfg.workers)
    records = []
    skipped = []
    for (_, gi, r), out in zip(tasks, outs):
        if out is None:
            skipped.append((grid[gi], r))
            continue
        records += [Record("fig1", "gaussian", grid[gi], r, s, m, v) for s, m, v in out]
    summary = _summarize(records)
    curve = {}
    for g in grid:
        cell = summary.get("gaussian", {}).get(_key(g))
        if not cell:
            continue
        entry = {"theory": theory.fig1_theory_percent_change(g), "p": int(round(g * cfg["n_t"]))}
        for name in cfg["schemes"]:
            entry[name] = 100.0 * (cell[name]["mse"]["mean"] / cell["merged"]["mse"]["mean"] - 1.0)
        curve[_key(g)] = entry
    summary["curve"] = curve
    summary["skipped"] = skipped
    return _finish("fig1", cfg, records, summary, t0)


# ----------------------------------------------------------------- forests


def forest_clusters(family, K, n_t, p, width=0.5, spacing=1.0):
    """Clusters along the diagonal.

    Uniform clusters are ``[t*spacing, t*spacing + width]^p``; gaussian
    and laplace clusters (unit variance) are spaced so that neighbouring
    centres sit as many standard deviations apart as the uniform ones.
    """
    if family == "uniform":
        return datagen.uniform_clusters(K, p, n_t, width, spacing)
    sd_spacing = spacing / (width / math.sqrt(12.0))
    locs = datagen.diagonal_layout(K, p, sd_spacing)
    return [datagen.ClusterSpec(family, n_t, p, mean=locs[t]) for t in range(K)]


def _forest_setup(P, family, K, n_t):
    clusters = forest_clusters(family, K, n_t, P["p"], P["width"], P["spacing"])
    space = P.get("split_space", "quantile")
    cdfs = [MarginalCDF.for_clusters([c], space) for c in clusters]
    merged_cdf = MarginalCDF.for_clusters(clusters, space)
    scheme = SplitScheme.idealized(P["p"], range(P["S"]))
    return clusters, cdfs, merged_cdf, scheme


def _fig2_replicate(args):
    cfg, family, gi, r = args
    P = cfg.params
    K = int(P["grid"][gi])
    n_t = P["n_total"] // K
    clusters, cdfs, merged_cdf, scheme = _forest_setup(P, family, K, n_t)
    seed = mix_seed(cfg.seed, ("uniform", "gaussian", "laplace").index(family), gi, r)
    outcome = datagen.gen_beta(P["p"], P["S"], mix_seed(seed, 0), noise_sd=P["sigma"])
    ds = datagen.make_dataset(clusters, outcome, mix_seed(seed, 1))
    ts = datagen.gen_testpoints(clusters, P["m"], mix_seed(seed, 2))
    y = outcome.signal(ts.X)
    if P["rmse_target"] == "observed":
        y = datagen.gen_outcome(ts.X, outcome, None, mix_seed(seed, 3))
    # merged and cluster forests share tree structures (common random numbers)
    forest = CenteredForest(P["B"], theory.tree_depth(P["k_n"]), scheme, mix_seed(seed, 4))
    pm = merged_forest_predict(forest, merged_cdf, ds.X, ds.Y, ts.X)
    pe = ensemble_forest_predict([forest] * K, cdfs, [ds.cluster(t) for t in range(1, K + 1)], ts.X, ts.membership)
    return [("merged", "rmse", _rmse(pm, y)), ("ensemble", "rmse", _rmse(pe, y))]


def run_fig2(cfg: ExperimentConfig) -> ExperimentResult:
    """RMSE of merged vs cluster-wise centered forests as K grows."""
    t0 = time.perf_counter()
    grid = cfg["grid"]
    for K in grid:
        theory._log2_int(int(K))
    tasks = [(cfg, fam, gi, r) for fam in cfg["families"] for gi in range(len(grid)) for r in range(cfg.R)]
    outs = _run_tasks(_fig2_replicate, tasks, cfg.workers)
    records = []
    for (_, fam, gi, r), out in zip(tasks, outs):
        records += [Record("fig2", fam, grid[gi], r, s, m, v) for s, m, v in out]
    summary = _summarize(records)
    curves = {}
    for fam in cfg["families"]:
        for K in grid:
            e = np.array([x.value for x in records if x.family == fam and x.grid_value == K and x.scheme == "ensemble"])
            m = np.array([x.value for x in records if x.family == fam and x.grid_value == K and x.scheme == "merged"])
            diff = aggregate(m - e)
            curves.setdefault(fam, {})[_key(K)] = {
                "ensemble": float(e.mean()),
                "merged": float(m.mean()),
                "improvement_percent": 100.0 * (1.0 - e.mean() / m.mean()),
                "paired_diff": diff,
                "bound_ratio": theory.cf_bound_general(int(K), cfg["width"], cfg["S"], cfg["k_n"], 1.0 / cfg["S"], "merged")
                / theory.cf_bound_general(int(K), cfg["width"], cfg["S"], cfg["k_n"], 1.0 / cfg["S"], "ensemble"),
            }
    summary["curves"] = curves
    return _finish("fig2", cfg, records, summary, t0)


# ----------------------------------------------------------------- bias


def _bias_replicate(args):
    cfg, r = args
    P = cfg.params
    K, S, p = P["K"], P["S"], P["p"]
    n_t = P["n"] // K
    clusters, cdfs, merged_cdf, scheme = _forest_setup(P, "uniform", K, n_t)
    seed = mix_seed(cfg.seed, 0, r)
    ts = datagen.gen_testpoints(clusters, P["m"], mix_seed(seed, 0))
    depth = theory.tree_depth(P["k_n"])
    outcome = datagen.gen_beta(p, S, mix_seed(seed, 1), noise_sd=P["sigma"])
    marg = P["marginalize_beta"]
    f_star = ts.X[:, :S] if marg else outcome.signal(ts.X)[:, None]
    q = f_star.shape[1]
    acc = {name: [np.zeros((P["m"], q)), np.zeros((P["m"], q))] for name in ("ensemble", "merged")}
    for d in range(P["R_d"]):
        ds = datagen.make_dataset(clusters, outcome, mix_seed(seed, 2, d))
        forest = CenteredForest(P["B"], depth, scheme, mix_seed(seed, 3, d))
        if marg:
            # E_beta bias^2 = |E[leaf mean of x_S] - x_S|^2 since beta ~ N(0, I_S)
            resp_m = ds.X[:, :S]
            resp_e = [ds.cluster(t)[0][:, :S] for t in range(1, K + 1)]
        else:
            resp_m = ds.Y[:, None]
            resp_e = [ds.cluster(t)[1][:, None] for t in range(1, K + 1)]
        half = d % 2
        acc["merged"][half] += merged_forest_predict(forest, merged_cdf, ds.X, resp_m, ts.X)
        acc["ensemble"][half] += ensemble_forest_predict(
            [forest] * K, cdfs, [ds.cluster(t) for t in range(1, K + 1)], ts.X, ts.membership, Z=resp_e
        )
    n_half = [(P["R_d"] + 1) // 2, P["R_d"] // 2]
    out = {}
    for name, (a, b) in acc.items():
        # product of two independent half-sample errors is unbiased for bias^2
        ga = a / n_half[0] - f_star
        gb = b / n_half[1] - f_star
        out[name] = fmean(np.sum(ga * gb, axis=1).tolist())
    return out


def estimate_squared_bias(cfg: ExperimentConfig) -> ExperimentResult:
    """Nested Monte Carlo estimate of the squared bias of both forests.

    Outer replicates draw test points (and beta); each averages R_d
    datasets, each with B fresh trees. The mean over datasets is split
    into two independent halves whose errors are multiplied, giving an
    unbiased estimate of the squared bias. With ``marginalize_beta`` the
    average over beta ~ N(0, I_S) is taken in closed form.
    """
    if cfg["R_d"] < 2:
        raise ValueError("R_d must be at least 2")
    t0 = time.perf_counter()
    outs = _run_tasks(_bias_replicate, [(cfg, r) for r in range(cfg.R)], cfg.workers)
    records = []
    for r, out in enumerate(outs):
        records += [Record("bias_bound", "uniform", cfg["k_n"], r, name, "bias2", v) for name, v in out.items()]
    summary = _summarize(records)
    K, S, k_n = cfg["K"], cfg["S"], cfg["k_n"]
    probs = SplitScheme.idealized(cfg["p"], range(S)).probs
    p_n = float(probs[:S].min())
    est = {}
    for name in ("ensemble", "merged"):
        v = [x.value for x in records if x.scheme == name]
        est[name] = {"mean": fmean(v), "jackknife_se": jackknife_se(v)}
        est[name]["bound"] = theory.cf_bound_general(K, cfg["width"], S, k_n, p_n, name)
    diff = np.array([a.value - b.value for a, b in zip(
        [x for x in records if x.scheme == "merged"], [x for x in records if x.scheme == "ensemble"])])
    est["difference"] = {"mean": float(diff.mean()), "jackknife_se": jackknife_se(diff)}
    summary["estimates"] = est
    summary["p_n"] = p_n
    return _finish("bias_bound", cfg, records, summary, t0)


# ----------------------------------------------------------------- variance


def _variance_means(P):
    K, p = P["K"], P["p"]
    if P["means"] == "orthogonal":
        return P["radius"] * np.eye(p)[:K]
    if P["means"] == "zero":
        return np.zeros((K, p))
    return None


def _variance_replicate(args):
    cfg, r = args
    P = cfg.params
    K, p, n = P["K"], P["p"], P["n"]
    n_t = n // K
    seed = mix_seed(cfg.seed, 0, r)
    means = _variance_means(P)
    if means is None:
        means = datagen.gen_means_on_sphere(K, p, P["radius"], mix_seed(seed, 0))
    clusters = _gaussian_clusters(K, n_t, p, means)
    Xs = [datagen.gen_cluster(c, mix_seed(seed, 1, t)) for t, c in enumerate(clusters)]
    ts = datagen.gen_testpoints(clusters, P["m"], mix_seed(seed, 2), standard_normal=P["test_mode"] == "standard_normal")
    vm = linmodels.merged_cond_variance(Xs, ts.X, P["sigma"])
    ve = linmodels.ensemble_opt_cond_variance(Xs, ts.X, P["sigma"])
    return {
        "n_var_merged": n * fmean(vm.tolist()),
        "n_var_ensemble": n * fmean(ve.tolist()),
        "ratio": fmean((vm / ve).tolist()),
    }


def estimate_cond_variance(cfg: ExperimentConfig) -> ExperimentResult:
    """Exact conditional variances averaged over random designs and test points.

    Each replicate draws fresh cluster designs and ``m`` test points and
    records n times the average merged and optimal-ensemble variances and
    the average of their ratio.
    """
    t0 = time.perf_counter()
    outs = _run_tasks(_variance_replicate, [(cfg, r) for r in range(cfg.R)], cfg.workers)
    records = []
    for r, out in enumerate(outs):
        records += [Record("variance_check", "gaussian", cfg["p"], r, "ols", k, v) for k, v in out.items()]
    summary = _summarize(records)
    P = cfg.params
    means = _variance_means(P)
    if means is not None:
        K, p, n = P["K"], P["p"], P["n"]
        summary["limits"] = {
            "n_d1": n * theory.ensemble_variance_limit_d1(p, [n // K] * K, np.linalg.norm(means, axis=1)),
            "n_d2": theory.merged_variance_limit_d2(p, [1 / K] * K, means),
        }
        summary["limits"]["kappa"] = summary["limits"]["n_d2"] / summary["limits"]["n_d1"]
    return _finish("variance_check", cfg, records, summary, t0)


def fixed_design_variance(Xs, x_star, beta, sigma, R, seed):
    """Empirical variance of merged and optimal-ensemble predictions at x_star.

    Holds the designs fixed and redraws only the noise R times. Returns
    ``(empirical, exact)`` dictionaries keyed by learner.
    """
    Xs = [np.asarray(X, float) for X in Xs]
    x_star = np.asarray(x_star, float)
    X = np.vstack(Xs)
    L = linmodels.gram_cholesky(X.T @ X)
    fits_L = [linmodels.gram_cholesky(Xt.T @ Xt) for Xt in Xs]
    q = np.array([linmodels.qform(Xt, x_star) for Xt in Xs])
    w = weighting.ivw_oracle_weights(q).w
    rng = np.random.Generator(np.random.PCG64(mix_seed(seed)))
    preds = np.empty((R, 2))
    for r in range(R):
        eps = sigma * rng.standard_normal(X.shape[0])
        Y = X @ beta + eps
        pm = _solve(L, X.T @ Y) @ x_star
        parts, start = [], 0
        for Xt, Lt in zip(Xs, fits_L):
            Yt = Y[start:start + len(Xt)]
            start += len(Xt)
            parts.append(_solve(Lt, Xt.T @ Yt) @ x_star)
        preds[r] = pm, float(np.dot(w, parts))
    exact = {
        "merged": float(linmodels.merged_cond_variance(Xs, x_star, sigma)),
        "ensemble": float(linmodels.ensemble_opt_cond_variance(Xs, x_star, sigma)),
    }
    emp = {"merged": float(np.var(preds[:, 0], ddof=1)), "ensemble": float(np.var(preds[:, 1], ddof=1))}
    emp_mean = {"merged": float(preds[:, 0].mean()), "ensemble": float(preds[:, 1].mean())}
    return emp, exact, emp_mean


def _solve(L, rhs):
    from scipy.linalg import cho_solve

    return cho_solve((L, True), rhs)


RUNNERS = {
    "table1": run_table1,
    "fig1": run_fig1,
    "fig2": run_fig2,
    "bias_bound": estimate_squared_bias,
    "variance_check": estimate_cond_variance,
}


def run(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg)

"""Command-line interface.

Subcommands::

    clusterens gen --family uniform --k 2 --p 3 --n-t 500 --out data.csv
    clusterens theory ols_ratio --gamma 0.25 --k 2
    clusterens simulate config.json --out results/
    clusterens reproduce {table1,fig1,fig2,bias} --seed 42 --out results/

Exit codes: 0 success, 1 runtime failure (JSON report on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import inspect
import json
import logging
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Optional

from clusterens import datagen, harness, theory

REPRODUCE = {"table1": "table1.json", "fig1": "fig1.json", "fig2": "fig2.json", "bias": "bias.json"}
UINT64_MAX = 2**64 - 1


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    subcommand: str
    target: Optional[str] = None
    params: Optional[dict] = None
    seed: Optional[int] = None
    out: Optional[str] = None
    workers: int = 1
    fmt: str = "csv"
    verbosity: int = 0


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}")
    if not 0 <= v <= UINT64_MAX:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _common(p):
    p.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (or file for gen)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="clusterens", description="Merging versus cluster-wise ensembling.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("gen", help="generate a clustered dataset")
    g.add_argument("--family", choices=("gaussian", "uniform", "laplace"), default="gaussian")
    g.add_argument("--k", type=int, default=2, help="number of clusters")
    g.add_argument("--p", type=int, default=10)
    g.add_argument("--n-t", type=int, default=400, help="rows per cluster")
    g.add_argument("--s", type=int, default=None, help="number of nonzero coefficients (default p)")
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--radius", type=float, default=1.0, help="gaussian/laplace mean norm")
    g.add_argument("--spacing", type=float, default=1.0, help="uniform cluster spacing")
    _common(g)

    t = sub.add_parser("theory", help="evaluate a closed-form calculator")
    t.add_argument("calculator", choices=sorted(theory.CALCULATORS))
    t.add_argument("params", nargs=argparse.REMAINDER, help="--name value pairs")

    s = sub.add_parser("simulate", help="run an experiment described by a JSON config")
    s.add_argument("config")
    _common(s)

    r = sub.add_parser("reproduce", help="run a bundled experiment")
    r.add_argument("target", choices=sorted(REPRODUCE))
    _common(r)
    return parser


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _calculator_kwargs(name, tokens):
    """Map ``--name value`` tokens onto the calculator's parameters.

    Names match case-insensitively and ignore underscores, so ``--kn``
    binds ``k_n`` and ``--k`` binds ``K``.
    """
    fn = theory.CALCULATORS[name]
    params = {p.replace("_", "").lower(): p for p in inspect.signature(fn).parameters}
    kwargs = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise UsageError(f"expected --name, got {tok!r}")
        key = tok[2:].replace("-", "").replace("_", "").lower()
        if key not in params:
            raise UsageError(f"{name} has no parameter {tok!r}; expected one of {sorted(params.values())}")
        try:
            kwargs[params[key]] = _parse_value(next(it))
        except StopIteration:
            raise UsageError(f"missing value for {tok}")
    return kwargs


def parse_args(argv: Optional[List[str]] = None) -> CliConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.subcommand == "theory":
        try:
            params = _calculator_kwargs(ns.calculator, ns.params)
        except UsageError as exc:
            parser.error(str(exc))
        return CliConfig("theory", ns.calculator, params)
    if ns.workers < 1:
        parser.error("--workers must be at least 1")
    target = {"simulate": getattr(ns, "config", None), "reproduce": getattr(ns, "target", None)}.get(ns.subcommand)
    cfg = CliConfig(ns.subcommand, target, None, ns.seed, ns.out, ns.workers, ns.fmt, ns.verbose)
    if ns.subcommand == "gen":
        cfg.params = {k: getattr(ns, k) for k in ("family", "k", "p", "n_t", "s", "sigma", "radius", "spacing")}
    return cfg


def _load_experiment(cfg: CliConfig):
    if cfg.subcommand == "reproduce":
        text = resources.files("clusterens.configs").joinpath(REPRODUCE[cfg.target]).read_text()
    else:
        text = Path(cfg.target).read_text()
    exp = harness.ExperimentConfig.from_dict(json.loads(text))
    if cfg.seed is not None:
        exp.seed = cfg.seed
    exp.workers = cfg.workers
    return exp


def _write_records(result, out: Path, fmt):
    out.mkdir(parents=True, exist_ok=True)
    stem = result.experiment
    written = []
    if fmt == "csv":
        written.append(result.write_csv(out / f"{stem}.csv"))
        if result.weights:
            written.append(result.write_weights_csv(out / f"{stem}_weights.csv"))
    else:
        rows = [dict(zip(harness.CSV_COLUMNS, r.row())) for r in result.records]
        (out / f"{stem}_records.json").write_text(json.dumps(rows, indent=1) + "\n")
        written.append(out / f"{stem}_records.json")
    written.append(result.write_json(out / f"{stem}_summary.json"))
    return written


def _run_gen(cfg: CliConfig):
    P = cfg.params
    seed = cfg.seed or 0
    K, p, n_t = P["k"], P["p"], P["n_t"]
    if P["family"] == "uniform":
        clusters = datagen.uniform_clusters(K, p, n_t, spacing=P["spacing"])
    else:
        means = datagen.gen_means_on_sphere(K, p, P["radius"], seed)
        clusters = [datagen.ClusterSpec(P["family"], n_t, p, mean=means[t]) for t in range(K)]
    outcome = datagen.gen_beta(p, P["s"] or p, seed, noise_sd=P["sigma"])
    ds = datagen.make_dataset(clusters, outcome, seed)
    out = Path(cfg.out or "dataset.csv")
    if out.suffix != ".csv":
        out = out / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out)
    print(json.dumps({"written": str(out), "n": ds.n, "p": ds.p, "K": ds.K}))


def dispatch(cfg: CliConfig) -> int:
    try:
        if cfg.subcommand == "theory":
            value = theory.CALCULATORS[cfg.target](**cfg.params)
            print(json.dumps({"value": float(value)}))
        elif cfg.subcommand == "gen":
            _run_gen(cfg)
        else:
            logging.basicConfig(level=logging.WARNING - 10 * cfg.verbosity, format="%(levelname)s %(message)s")
            exp = _load_experiment(cfg)
            result = harness.run(exp)
            written = _write_records(result, Path(cfg.out or "results"), cfg.fmt)
            print(json.dumps({"experiment": result.experiment, "written": [str(w) for w in written]}))
        return 0
    except Exception as exc:  # every runtime failure becomes a JSON report
        report = {"error": type(exc).__name__, "message": str(exc), "subcommand": cfg.subcommand}
        print(json.dumps(report), file=sys.stderr)
        return 1


def main(argv: Optional[List[str]] = None) -> int:
    return dispatch(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())

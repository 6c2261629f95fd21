import json
import subprocess
import sys

import pytest

from clusterens import cli
from clusterens.datagen import Dataset


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "clusterens", *args], capture_output=True, text=True, cwd=cwd)


def test_theory_ols_ratio(capsys):
    assert cli.main(["theory", "ols_ratio", "--gamma", "0.25", "--k", "2"]) == 0
    assert capsys.readouterr().out.strip() == '{"value": 0.6666666666666666}'


def test_theory_cf_bound(capsys):
    assert cli.main(["theory", "cf_bound", "--s", "5", "--kn", "1024", "--pn", "0.2", "--learner", "merged"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.2460930, abs=1e-7)


def test_theory_list_parameter(capsys):
    assert cli.main(["theory", "d2", "--p", "3", "--fracs", "[0.5, 0.5]", "--means", "[[1,0,0],[0,1,0]]"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(1 + 4 / 3)


def test_theory_domain_error_is_json(capsys):
    assert cli.main(["theory", "ols_ratio", "--gamma", "0.7"]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "DomainError"


@pytest.mark.parametrize(
    "argv",
    [[], ["reproduce"], ["reproduce", "fig3"], ["reproduce", "fig1", "--bogus"], ["theory", "ols_ratio", "--nope", "1"],
     ["reproduce", "fig1", "--seed", "-1"], ["reproduce", "fig1", "--workers", "0"]],
)
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        cli.parse_args(argv)
    assert exc.value.code == 2


def test_parse_reproduce():
    c = cli.parse_args(["reproduce", "fig1", "--seed", "42", "--out", "./results"])
    assert (c.subcommand, c.target, c.seed, c.out) == ("reproduce", "fig1", 42, "./results")


def test_bundled_configs_load():
    for target in cli.REPRODUCE:
        exp = cli._load_experiment(cli.CliConfig("reproduce", target, seed=7))
        assert exp.seed == 7 and exp.R >= 1
    assert cli._load_experiment(cli.CliConfig("reproduce", "table1")).R == 100
    assert cli._load_experiment(cli.CliConfig("reproduce", "fig1")).params["n_t"] == 400


def test_gen_writes_dataset(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert cli.main(["gen", "--family", "uniform", "--k", "2", "--p", "3", "--n-t", "20", "--seed", "4", "--out", str(out)]) == 0
    ds = Dataset.from_csv(out)
    assert (ds.n, ds.p, ds.K) == (40, 3, 2)


def test_simulate_outputs_are_byte_identical(tmp_path):
    config = {"schema": 1, "kind": "table1", "seed": 3, "params": {"replicates": 3, "m": 50}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(config))
    for sub, workers in (("a", "1"), ("b", "2")):
        assert cli.main(["simulate", str(path), "--out", str(tmp_path / sub), "--workers", workers]) == 0
    for name in ("table1.csv", "table1_weights.csv", "table1_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "table1.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 * 14


def test_simulate_json_format(tmp_path):
    config = {"schema": 1, "kind": "variance_check", "params": {"replicates": 2, "m": 20}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(config))
    assert cli.main(["simulate", str(path), "--out", str(tmp_path), "--format", "json"]) == 0
    rows = json.loads((tmp_path / "variance_check_records.json").read_text())
    assert len(rows) == 6 and rows[0]["experiment"] == "variance_check"


def test_runtime_failure_exit_1(tmp_path):
    res = run_cli("simulate", str(tmp_path / "missing.json"))
    assert res.returncode == 1
    assert json.loads(res.stderr)["error"] == "FileNotFoundError"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": 1, "kind": "fig1", "params": {"grid": []}}))
    res = run_cli("simulate", str(bad))
    assert res.returncode == 1 and json.loads(res.stderr)["error"] == "ValueError"


def test_module_entry_point():
    res = run_cli("theory", "tree_depth", "--kn", "64")
    assert res.returncode == 0 and json.loads(res.stdout) == {"value": 6.0}
    assert run_cli().returncode == 2

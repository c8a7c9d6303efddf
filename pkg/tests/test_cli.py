import csv
import json
import math
import subprocess
import sys

import pytest

from rwurn import cli, experiments

GAUSS = {"type": "gaussian", "mean": [0.0], "cov": [[1.0]]}
POINT = {"type": "point", "c": [1.0]}

CONFIGS = {
    "moments": {"experiment": "moments", "seed": 3, "replicates": 2500, "block": 500,
                "model": {"kind": "yule", "rho": 1.0, "t": [1.0]}, "offset": GAUSS, "s": [0.0, 0.3],
                "pairs": [[0.2, 0.1]], "moments": ["first", "second", "martingale"]},
    "normality": {"experiment": "normality", "seed": 4, "replicates": 3, "model": {"kind": "wrrt", "n": [100, 1000]},
                  "offset": POINT},
    "gem": {"experiment": "gem", "seed": 5, "replicates": 40, "block": 16, "model": {"kind": "wrrt", "rho": 2.0, "n": 200}},
    "coupling": {"experiment": "coupling", "seed": 6, "replicates": 30, "block": 8, "model": {"kind": "yule", "n": 20}},
    "drift": {"experiment": "initial-drift", "seed": 7, "replicates": 6, "block": 2, "offset": POINT,
              "mu0": {"dim": 1, "atoms": [{"x": [0.0], "w": 1.0}]},
              "mu0_b": {"dim": 1, "atoms": [{"x": [10.0], "w": 1.0}]}, "n_grid": [10, 100]},
    "simulate": {"experiment": "urn", "seed": 8, "replicates": 5, "block": 2, "urn": "drw", "steps": 30,
                 "mu0": {"dim": 1, "atoms": [{"x": [0.0], "w": 2.0}]}, "offset": GAUSS,
                 "record": ["mass", "cf:s=0.3", "trace"]},
}


def write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("cmd", sorted(CONFIGS))
def test_every_subcommand_runs_and_is_deterministic(tmp_path, cmd, capsys):
    cfg = write(tmp_path, CONFIGS[cmd])
    assert cli.main([cmd, "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main([cmd, "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    man_a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    man_b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man_a == man_b
    for name in man_a["outputs"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    # re-run from the manifest itself
    assert cli.main([cmd, "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "c")]) == 0
    for name in man_a["outputs"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    assert "sha256=" in capsys.readouterr().out


def test_moments_report_row(tmp_path):
    cfg = {"experiment": "moments", "seed": 1, "replicates": 10 ** 4,
           "model": {"kind": "yule", "rho": 1.0, "t": 1.0}, "offset": GAUSS, "s": [0.0]}
    assert cli.main(["moments", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "moments.csv")
    assert len(rows) == 1
    row = rows[0]
    assert row["kind"] == "yule:F" and float(row["oracle_re"]) == pytest.approx(math.e, abs=1e-12)
    assert abs(float(row["z"])) <= 4 and float(row["se"]) > 0


@pytest.mark.parametrize("cmd", sorted(CONFIGS))
def test_single_replicate_gives_one_row_reports(tmp_path, cmd):
    cfg = dict(CONFIGS[cmd], replicates=1)
    if cmd == "moments":
        cfg = dict(cfg, s=[0.3], moments=["first"])
        cfg.pop("pairs")
    if cmd == "normality":
        cfg = dict(cfg, model={"kind": "wrrt", "n": 100}, annealed=True)
    if cmd == "simulate":
        cfg = dict(cfg, record=["cf:s=0.3"])
    assert cli.main([cmd, "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    out = {"moments": "moments.csv", "normality": "normality.csv", "gem": "gem.csv", "coupling": "coupling.csv",
           "drift": "drift.csv", "simulate": "urn.csv"}[cmd]
    rows = read_csv(tmp_path / out)
    if cmd == "gem":  # one row per statistic (branch fraction and the GEM stick)
        assert len(rows) == 2 and all(r["replicates"] == "1" for r in rows)
    elif cmd == "coupling":
        assert all(r["replicates"] == "1" for r in rows)
    elif cmd == "drift":
        assert all(r["pairs"] == "1" for r in rows)
    else:
        assert len(rows) == 1


def test_overrides(tmp_path):
    cfg = write(tmp_path, CONFIGS["gem"])
    assert cli.main(["gem", "--config", cfg, "--seed", "99", "--replicates", "5", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 99 and man["config"]["replicates"] == 5
    assert "workers" not in man["config"]
    assert man["version"] and len(man["config_sha256"]) == 64


def test_simulate_tree(tmp_path):
    cfg = {"experiment": "tree", "seed": 2, "replicates": 2, "model": {"kind": "bst", "n": 50},
           "offset": {"type": "pair_det", "l": [-1], "r": [1]}}
    assert cli.main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "tree.csv")
    assert [r["size"] for r in rows] == ["101", "101"]
    # the stored tree can be analysed by the normality command
    ncfg = {"experiment": "normality", "seed": 2, "offset": {"type": "pair_det", "l": [-1], "r": [1]},
            "scaling": [1.0, 0.0], "sigma2": 2.0}
    out = tmp_path / "n"
    assert cli.main(["normality", "--config", write(tmp_path, ncfg, "n.json"), "--tree",
                     str(tmp_path / "tree_0.jsonl"), "--out", str(out)]) == 0
    row = read_csv(out / "normality.csv")[0]
    assert row["which"] == "internal" and row["sample_size"] == "50"


# -- errors and exit codes -----------------------------------------------------------


def test_config_errors_exit_2(tmp_path, capsys):
    assert cli.main(["moments", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["moments", "--config", str(bad)]) == 2
    cfg = dict(CONFIGS["gem"])
    assert cli.main(["moments", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    cfg = dict(CONFIGS["gem"], bogus=1)
    assert cli.main(["gem", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "config error" in err and "bogus" in err


def test_domain_error_exit_3(tmp_path, capsys):
    cfg = dict(CONFIGS["moments"], pairs=[[0.9, 0.1]], replicates=10)
    assert cli.main(["moments", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 3
    assert "domain error" in capsys.readouterr().err


def test_node_cap_exit_4(tmp_path, capsys):
    cfg = {"experiment": "moments", "seed": 1, "replicates": 2, "node_cap": 1000,
           "model": {"kind": "yule", "t": 30.0}, "offset": GAUSS, "s": [0.1]}
    assert cli.main(["moments", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 4
    assert "resource error" in capsys.readouterr().err


def test_validate_messages(tmp_path, capsys):
    assert cli.main(["validate", "--config", write(tmp_path, {})]) == 2
    out = capsys.readouterr().out
    assert "experiment" in out and "seed" in out and "required" in out

    cfg = dict(CONFIGS["moments"], s=[1.0])
    assert cli.main(["validate", "--config", write(tmp_path, cfg)]) == 0
    out = capsys.readouterr().out
    assert "outside the CF domain" in out and "delta = 0.758" in out

    cfg = {"experiment": "moments", "seed": 1, "model": {"kind": "yule", "t": 30}, "offset": GAUSS, "s": [0.1]}
    assert cli.main(["validate", "--config", write(tmp_path, cfg)]) == 0
    assert "exceeds the node cap" in capsys.readouterr().out

    assert cli.main(["validate", "--config", write(tmp_path, CONFIGS["gem"])]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_master_seed_alias(tmp_path):
    cfg = dict(CONFIGS["gem"])
    cfg["master_seed"] = cfg.pop("seed")
    assert cli.main(["gem", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["gem", "--config", write(tmp_path, CONFIGS["gem"]), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "gem.csv").read_bytes() == (tmp_path / "b" / "gem.csv").read_bytes()


def test_experiments_validate_function():
    assert experiments.validate({})[0].startswith("error: schema")
    assert experiments.validate([1]) == ["error: a configuration must be a JSON object"]


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, CONFIGS["gem"])
    res = subprocess.run([sys.executable, "-m", "rwurn.cli", "gem", "--config", cfg, "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "rwurn.cli", "validate"], capture_output=True, text=True)
    assert res.returncode == 2

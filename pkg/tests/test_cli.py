import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from shapdag.cli import main
from shapdag.dag import Dag, read_dag
from shapdag.data import load_csv, save_csv
from test_assemble import nonlinear_collider

QUICK = ["--T", "10", "--hpo-budget", "2", "--n-samples", "50", "--permutations", "100", "--jobs", "1"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_linear_batch(tmp_path, capsys):
    code, _, _ = run(capsys, "generate", "--family", "linear", "--p", 10, "--m", 500,
                     "--n-datasets", 10, "--seed", 3, "--out", tmp_path)
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["schema_version"] == 1 and len(manifest["datasets"]) == 10
    assert len({e["seed"] for e in manifest["datasets"]}) == 10
    for e in manifest["datasets"]:
        d = load_csv(tmp_path / e["data"])
        assert d.values.shape == (500, 10)
        assert read_dag(tmp_path / e["truth"]).nodes == tuple(d.columns)
        assert read_dag(tmp_path / e["truth_dot"]) == read_dag(tmp_path / e["truth"])


def test_generate_zero_datasets(tmp_path, capsys):
    assert run(capsys, "generate", "--n-datasets", 0, "--out", tmp_path)[0] == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["datasets"] == []
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json"]


def test_generate_is_byte_identical(tmp_path, capsys):
    for sub in ("a", "b"):
        code, _, _ = run(capsys, "generate", "--family", "sigmoid_mix", "--p", 5, "--m", 50,
                         "--n-datasets", 3, "--seed", 11, "--out", tmp_path / sub)
        assert code == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_rejects_bad_inputs(tmp_path, capsys):
    assert run(capsys, "generate", "--p", 1, "--out", tmp_path)[0] == 2
    assert run(capsys, "generate", "--family", "cubic", "--out", tmp_path)[0] == 2
    assert run(capsys, "generate")[0] == 2


def test_discover_malformed_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3\n")
    code, _, err = run(capsys, "discover", bad, "--out", tmp_path / "o")
    assert code == 2 and "error" in err
    code, _, _ = run(capsys, "discover", tmp_path / "missing.csv", "--out", tmp_path / "o")
    assert code == 2


def test_discover_numeric_failure_exit_code(tmp_path, capsys):
    flat = tmp_path / "flat.csv"
    flat.write_text("a,b,c\n" + "1,1,1\n" * 30)
    code, _, err = run(capsys, "discover", flat, "--out", tmp_path / "o", *QUICK)
    assert code in (2, 3) and err


@pytest.mark.slow
def test_discover_nonlinear_collider_majority(tmp_path, capsys):
    hits = 0
    for seed in range(3):
        path = tmp_path / f"c{seed}.csv"
        save_csv(nonlinear_collider(seed), path)
        out = tmp_path / f"out{seed}"
        assert run(capsys, "discover", path, "--out", out, "--seed", seed, *QUICK)[0] == 0
        dot = read_dag(out / "dag.dot")
        hits += set(dot.edges) == {("X", "Z"), ("Y", "Z")}
        assert read_dag(out / "dag.edges") == dot == read_dag(out / "dag.json")
        report = json.loads((out / "report.json").read_text())
        assert report["schema_version"] == 1 and "timings" in report
        assert (out / "frequencies_gbt.csv").exists() and (out / "frequencies_mlp.csv").exists()
    assert hits >= 2


@pytest.mark.slow
def test_discover_modes_nest(tmp_path, capsys):
    path = tmp_path / "c.csv"
    save_csv(nonlinear_collider(4), path)
    run(capsys, "discover", path, "--out", tmp_path / "u", "--mode", "union", *QUICK)
    run(capsys, "discover", path, "--out", tmp_path / "i", "--mode", "intersection", *QUICK)
    assert set(read_dag(tmp_path / "i" / "dag.edges").edges) <= set(read_dag(tmp_path / "u" / "dag.edges").edges)


def test_evaluate(tmp_path, capsys):
    truth = Dag("abc", [("a", "b"), ("b", "c")])
    rev = Dag("abc", [("b", "a")])
    single = Dag("abc", [("a", "b")])
    for name, g in (("t", truth), ("r", rev), ("s", single)):
        (tmp_path / f"{name}.edges").write_text(g.to_edgelist())
    code, out, _ = run(capsys, "evaluate", tmp_path / "t.edges", tmp_path / "t.edges")
    assert code == 0 and json.loads(out)["f1"] == 1.0
    (tmp_path / "one.edges").write_text(Dag("abc", [("a", "b")]).to_edgelist())
    code, out, _ = run(capsys, "evaluate", tmp_path / "r.edges", tmp_path / "s.edges")
    rep = json.loads(out)
    assert rep["shd"] == 1 and rep["f1"] == 0.0
    code, out, _ = run(capsys, "evaluate", tmp_path / "t.edges", tmp_path / "t.edges", "--csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and float(rows[0]["f1"]) == 1.0


def test_evaluate_node_mismatch(tmp_path, capsys):
    (tmp_path / "a.edges").write_text(Dag("ab", [("a", "b")]).to_edgelist())
    (tmp_path / "b.edges").write_text(Dag("abc", [("a", "b")]).to_edgelist())
    code, _, err = run(capsys, "evaluate", tmp_path / "a.edges", tmp_path / "b.edges")
    assert code == 2 and err


def test_evaluate_pipes_into_aggregate(tmp_path):
    truth = Dag("abc", [("a", "b"), ("b", "c")])
    (tmp_path / "t.edges").write_text(truth.to_edgelist())
    (tmp_path / "e.edges").write_text(Dag("abc", [("a", "b"), ("c", "b")]).to_edgelist())
    cmd = [sys.executable, "-m", "shapdag"]
    ev = subprocess.run(cmd + ["evaluate", str(tmp_path / "e.edges"), str(tmp_path / "t.edges")],
                        capture_output=True, text=True, check=True)
    agg = subprocess.run(cmd + ["benchmark", "--aggregate", "-"], input=ev.stdout,
                         capture_output=True, text=True, check=True)
    rows = list(csv.DictReader(io.StringIO(agg.stdout)))
    assert len(rows) == 1 and rows[0]["source"] == "-"
    assert int(rows[0]["shd"]) == 1 and float(rows[0]["precision"]) == 0.5


def test_aggregate_rejects_garbage(tmp_path, capsys):
    (tmp_path / "x.json").write_text("not json\n")
    assert run(capsys, "benchmark", "--aggregate", tmp_path / "x.json")[0] == 2


def test_validate_shap_single_replicate(tmp_path, capsys):
    code, out, _ = run(capsys, "validate-shap", "--replicates", 1, "--n", 600, "--seed", 2,
                       "--out", tmp_path)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {r["structure"] for r in rows} == {"confounder", "chain", "collider", "collinear"}
    for r in rows:
        assert all(float(r[c]) == 0.0 for c in r if c.endswith("_sd"))
    assert (tmp_path / "validation.csv").read_text() == out
    assert json.loads((tmp_path / "validation.json").read_text())["replicates"] == 1
    assert run(capsys, "validate-shap", "--replicates", 0, "--out", tmp_path)[0] == 2


def test_config_file_merged_under_flags(tmp_path, capsys):
    from shapdag.cli import build_parser, resolve

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"T": 7, "tau": 0.3, "seed": 5}))
    args = build_parser().parse_args(["discover", "x.csv", "--out", "o", "--config", str(cfg), "--T", "9"])
    opts = resolve(args)
    assert (opts["T"], opts["tau"], opts["seed"], opts["q"]) == (9, 0.3, 5, 0.01)
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run(capsys, "discover", "x.csv", "--out", tmp_path / "o", "--config", cfg)
    assert code == 2 and "bogus" in err


def test_invalid_pipeline_options(tmp_path, capsys):
    path = tmp_path / "c.csv"
    save_csv(nonlinear_collider(0, 50), path)
    assert run(capsys, "discover", path, "--out", tmp_path / "o", "--q", 1.5)[0] == 2
    assert run(capsys, "discover", path, "--out", tmp_path / "o", "--hidden", "a,b")[0] == 2


def test_benchmark_small(tmp_path, capsys):
    code, out, _ = run(capsys, "benchmark", "--p", 4, "--m", 150, "--seeds", 2, "--out", tmp_path,
                       "--T", 3, "--hpo-budget", 1, "--n-samples", 30, "--permutations", 50, "--jobs", 1)
    assert code == 0 and "union" in out
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary["summary"]) == {"gbt", "mlp", "union", "intersection"}
    rows = list(csv.DictReader(io.StringIO((tmp_path / "benchmark.csv").read_text())))
    assert len(rows) == 8


def test_help_exits_cleanly(capsys):
    assert run(capsys, "--help")[0] == 0

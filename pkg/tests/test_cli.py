import json
import random

import pytest
from click.testing import CliRunner

from mosample.cli import main
from mosample.core import RandSource
from mosample.formats import loads_sample
from mosample.objectives import Objective, Sum
from mosample.single import pps_build

from conftest import EX1, EX2_KEYS, EX2_TABLE


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("MOSAMPLE_SEED", raising=False)
    runner = CliRunner()

    def _run(*args, input=None, env=None):
        return runner.invoke(main, list(map(str, args)), input=input, env=env)
    return _run


def test_pps_sample_matches_table(run, ex1_tsv):
    r = run("sample", ex1_tsv, "--kind", "pps", "--stat", "sum", "--k", 3, "--seed", 11)
    assert r.exit_code == 0, r.output
    s = loads_sample(r.stdout)
    table = dict(zip(EX2_KEYS, EX2_TABLE["sum"]))
    for x, _, p in s.probabilities():
        assert round(p, 2) == table[x]
    assert s == pps_build(EX1, Objective(Sum(), 3), RandSource(11))


def test_probe_data_reproduces_table(run, ex1_tsv):
    r = run("probe", "--data", ex1_tsv, "--stat", "sum", "--stat", "thresh:10", "--stat", "cap:5", "--k", 3)
    assert r.exit_code == 0
    d = json.loads(r.stdout)
    rows = {row["key"]: row for row in d["probabilities"]}
    for spec, col in EX2_TABLE.items():
        assert [round(rows[x]["per_stat"][spec], 2) for x in EX2_KEYS] == col
    assert round(d["expected_size"], 2) == 4.82


def test_probe_sample(run, ex1_tsv):
    run("sample", ex1_tsv, "--kind", "botk", "--stat", "sum", "--k", 3, "--out", "s.json")
    d = json.loads(run("probe", "--sample", "s.json").stdout)
    assert d["kind"] == "botk" and len(d["probabilities"]) == 3


def test_universal_monotone_unique_weights_has_empty_aux(run, ex1_tsv, tmp_path):
    p = tmp_path / "u.tsv"
    p.write_text("".join(f"k{i}\t{i + 1}\n" for i in range(10)))
    r = run("sample", p, "--kind", "universal-monotone", "--k", 3)
    assert json.loads(r.stdout)["aux"] == []


def test_empty_input(run, tmp_path):
    (tmp_path / "e.tsv").write_text("")
    for kind in ("pps", "botk", "mo-pps", "mo-botk", "universal-monotone", "universal-capping"):
        r = run("sample", "e.tsv", "--kind", kind, "--stat", "sum", "--k", 2)
        assert r.exit_code == 0, (kind, r.output)
        assert loads_sample(r.stdout).keys() == []


def test_stdin_input(run):
    text = "".join(f"{k}\t{w}\n" for k, w in EX1.items())
    a = run("sample", "--kind", "pps", "--stat", "sum", "--k", 3, input=text)
    b = run("sample", "-", "--kind", "pps", "--stat", "sum", "--k", 3, "--total", 385, input=text)
    assert a.exit_code == b.exit_code == 0
    assert a.stdout == b.stdout


def test_seed_from_environment(run, ex1_tsv):
    a = run("sample", ex1_tsv, "--kind", "botk", "--stat", "sum", "--k", 3, env={"MOSAMPLE_SEED": "42"})
    assert json.loads(a.stdout)["hash_seed"] == 42


@pytest.mark.parametrize("kind", ["pps", "botk", "mo-pps", "mo-botk", "universal-monotone", "universal-capping"])
def test_sharded_equals_one_shot_and_merge(run, tmp_path, kind):
    rng = random.Random(kind)
    rows = [(f"key{i}", rng.choice([0, 1, 2.5, 7, 30])) for i in range(60)]
    (tmp_path / "d.tsv").write_text("".join(f"{k}\t{w}\n" for k, w in rows))
    (tmp_path / "a.tsv").write_text("".join(f"{k}\t{w}\n" for k, w in rows[:25]))
    (tmp_path / "b.tsv").write_text("".join(f"{k}\t{w}\n" for k, w in rows[25:]))
    args = ["--kind", kind, "--stat", "sum", "--k", 4, "--seed", 9]
    if kind.startswith("mo"):
        args += ["--stat", "thresh:5"]
    one = run("sample", "d.tsv", *args)
    assert one.exit_code == 0, one.output
    sharded = run("sample", "d.tsv", *args, "--shards", 3)
    assert sharded.stdout == one.stdout
    run("sample", "a.tsv", *args, "--out", "a.json")
    run("sample", "b.tsv", *args, "--out", "b.json")
    merged = run("merge", "a.json", "b.json")
    assert merged.exit_code == 0
    assert merged.stdout == one.stdout
    assert run("merge", "a.json").stdout == (tmp_path / "a.json").read_text()


def test_determinism(run, ex1_tsv):
    args = ["sample", ex1_tsv, "--kind", "mo-botk", "--stat", "sum", "--stat", "cap:5", "--k", 2, "--seed", 3]
    assert run(*args).stdout == run(*args).stdout


def test_estimate(run, ex1_tsv, tmp_path):
    run("sample", ex1_tsv, "--kind", "universal-monotone", "--k", 20, "--out", "full.json")
    (tmp_path / "seg.txt").write_text("u3\nu12\nu42\nu55\n")
    r = run("estimate", "--sample", "full.json", "--stat", "sum", "--segment", "seg.txt")
    assert json.loads(r.stdout) == {"estimate": 128.0, "keys_used": 4, "kind": "universal_monotone",
                                    "warnings": []}
    r = run("estimate", "--sample", "full.json", "--stat", "cap:5", "--segment", "prefix:u1")
    assert json.loads(r.stdout)["estimate"] == 5 + 5 + 5 + 1


def test_estimate_bias_warning(run, ex1_tsv):
    run("sample", ex1_tsv, "--kind", "pps", "--stat", "thresh:10", "--k", 3, "--out", "t.json")
    r = run("estimate", "--sample", "t.json", "--stat", "sum", "--data", ex1_tsv)
    assert json.loads(r.stdout)["warnings"]


@pytest.mark.parametrize("args,code", [
    (["sample", "--kind", "pps", "--stat", "bogus", "--k", 3], 1),
    (["sample", "--kind", "pps", "--k", 3], 1),
    (["sample", "--kind", "pps", "--stat", "sum", "--stat", "count", "--k", 3], 1),
    (["sample", "--kind", "nope", "--stat", "sum", "--k", 3], 1),
    (["sample", "missing.tsv", "--kind", "botk", "--stat", "sum", "--k", 3], 1),
    (["frobnicate"], 1),
])
def test_usage_errors(run, args, code):
    assert run(*args).exit_code == code


def test_data_errors(run, tmp_path):
    (tmp_path / "dup.tsv").write_text("a\t1\na\t2\n")
    r = run("sample", "dup.tsv", "--kind", "pps", "--stat", "sum", "--k", 1)
    assert r.exit_code == 2 and "duplicate" in r.stderr
    (tmp_path / "bad.tsv").write_text("a\t1\nb\tzz\n")
    r = run("sample", "bad.tsv", "--kind", "botk", "--stat", "sum", "--k", 1)
    assert r.exit_code == 2 and "line 2" in r.stderr
    (tmp_path / "junk.json").write_text("{}")
    assert run("estimate", "--sample", "junk.json", "--stat", "sum").exit_code == 2


def test_contract_errors(run, ex1_tsv):
    run("sample", ex1_tsv, "--kind", "botk", "--stat", "sum", "--k", 3, "--seed", 1, "--out", "a.json")
    run("sample", ex1_tsv, "--kind", "botk", "--stat", "sum", "--k", 3, "--seed", 2, "--out", "b.json")
    run("sample", ex1_tsv, "--kind", "pps", "--stat", "sum", "--k", 3, "--seed", 1, "--out", "c.json")
    r = run("merge", "a.json", "b.json")
    assert r.exit_code == 3 and "hash_seed" in r.stderr
    assert run("merge", "a.json", "c.json").exit_code == 3


def test_bench(run, tmp_path):
    (tmp_path / "w.tsv").write_text("".join(f"x{i:03d}\t{1 + 7 * i / 99!r}\n" for i in range(100)))
    cfg = {"data": "w.tsv", "suites": [
        {"type": "cv", "kind": "pps", "stats": ["sum"], "k": 10, "trials": 2000, "seed": 1},
        {"type": "cv", "kind": "priority", "stats": ["sum"], "g": "cap:2", "k": 10, "trials": 2000},
        {"type": "concentration", "kind": "ppswor", "stats": ["sum"], "k": 25, "trials": 1000},
    ]}
    (tmp_path / "bench.json").write_text(json.dumps(cfg))
    r = run("bench", "--config", "bench.json")
    assert r.exit_code == 0, r.output
    report = json.loads(r.stdout)
    assert report["pass"] is True and len(report["suites"]) == 3


def test_optimize_one_median(run, tmp_path):
    rng = random.Random(3)
    pts = {f"p{i}": rng.gauss(0, 1) for i in range(60)}
    (tmp_path / "d.tsv").write_text("".join(f"{k}\t1\n" for k in pts))
    grid = [-2 + j / 5 for j in range(21)]
    with open(tmp_path / "c.jsonl", "w") as fh:
        for j, c in enumerate(grid):
            fh.write(json.dumps({"name": f"c{j}", "values": {k: abs(v - c) for k, v in pts.items()}}) + "\n")
    costs = [sum(abs(v - c) for v in pts.values()) for c in grid]
    r = run("optimize", "--data", "d.tsv", "--candidates", "c.jsonl", "--M", f"negate-shift:{2 * max(costs)}",
            "--eps", 0.2, "--seed", 5)
    assert r.exit_code == 0, r.output
    d = json.loads(r.stdout)
    assert d["certified"] and d["name"] == f"table:c{d['choice']}"
    assert costs[d["choice"]] <= 1.6 * min(costs)


def test_optimize_bad_outer(run, tmp_path):
    (tmp_path / "d.tsv").write_text("a\t1\n")
    (tmp_path / "c.jsonl").write_text('{"name": "s", "stat": "sum"}\n')
    assert run("optimize", "--data", "d.tsv", "--candidates", "c.jsonl", "--M", "square").exit_code == 1
    (tmp_path / "bad.jsonl").write_text('{"name": "s"}\n')
    assert run("optimize", "--data", "d.tsv", "--candidates", "bad.jsonl").exit_code == 2


def test_version(run):
    r = run("--version")
    assert r.exit_code == 0 and "mosample" in r.output

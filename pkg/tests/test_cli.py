import json

import pytest

from qsuperopt.cli import main
from qsuperopt.workload import fixture_log, lifespan_fixture, write_log_csv


@pytest.fixture(scope="module")
def rdb(tmp_path_factory):
    d = tmp_path_factory.mktemp("rdb")
    assert main(["gen", "random", "--tables", "4", "--seed", "2", "--out", str(d / "db")]) == 0
    return d / "db"


def test_gen_and_optimize(rdb, tmp_path, capsys):
    capsys.readouterr()
    out = tmp_path / "plans.json"
    assert main(["optimize", str(rdb / "queries.sql"), "--db", str(rdb), "--k", "3",
                 "--error-level", "1.0", "--out", str(out)]) == 0
    plans = json.loads(out.read_text())[0]["plans"]
    assert [p["rank"] for p in plans] == [1, 2, 3]
    costs = [p["estimated_cost"] for p in plans]
    assert costs == sorted(costs)


def test_global_flags_before_subcommand(rdb, capsys):
    assert main(["--seed", "3", "optimize", str(rdb / "queries.sql"), "--db", str(rdb)]) == 0


@pytest.mark.parametrize("strategy,extra", [("topk", ["--k", "2"]),
                                            ("explore", ["--episodes", "4", "--select-k", "2", "--rounds", "1"]),
                                            ("latent", ["--budget", "2"])])
def test_superopt(rdb, tmp_path, strategy, extra, capsys):
    out = tmp_path / "r.json"
    assert main(["superopt", strategy, str(rdb / "queries.sql"), "--db", str(rdb), "--seed", "1",
                 "--out", str(out)] + extra) == 0
    rep = json.loads(out.read_text())
    assert rep["strategy"] == strategy
    q = rep["queries"][0]
    assert q["chosen_measured_cost"] <= q["baseline_measured_cost"]


def test_compare_deterministic(rdb, tmp_path, capsys):
    outs = []
    for i in range(2):
        out = tmp_path / f"m{i}.json"
        assert main(["compare", str(rdb / "queries.sql"), "--db", str(rdb), "--strategies", "baseline,topk2",
                     "--out", str(out)]) == 0
        outs.append(json.loads(out.read_text())["normalized_cost"])
    assert outs[0] == outs[1] and outs[0]["baseline"] == [1.0]


def test_analyze(tmp_path, capsys):
    log = tmp_path / "log.csv"
    write_log_csv(log, fixture_log(lifespan_fixture(adhoc_templates=20, scale=20000.0)))
    with open(log, "a") as fh:
        fh.write("garbage\n")
    assert main(["analyze", str(log), "--out", str(tmp_path / "rep.csv")]) == 0
    cap = capsys.readouterr()
    assert "10983" in cap.out and "skipped 1" in cap.err
    assert (tmp_path / "rep.csv").exists()


def test_bench_small(tmp_path, capsys):
    db = tmp_path / "m"
    assert main(["gen", "movie", "--actors", "200", "--movies", "300", "--companies", "10",
                 "--out", str(db)]) == 0
    assert main(["bench", "bespoke", "--db", str(db), "--n", "100"]) == 0
    assert "speedup" in capsys.readouterr().out


def test_exit_codes(rdb, tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "missing.csv")]) == 2
    bad = tmp_path / "bad.sql"
    bad.write_text("SELECT FROM WHERE\n")
    assert main(["optimize", str(bad), "--db", str(rdb)]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["optimize", str(rdb / "queries.sql"), "--db", str(tmp_path)]) == 2
    assert main(["gen", "movie"]) == 2  # needs --out
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["superopt", "topk"])
    assert e.value.code == 1


def test_internal_error_exit_code(monkeypatch, rdb, capsys):
    from qsuperopt import cli
    from qsuperopt.errors import InvariantViolation

    def boom(args, g):
        raise InvariantViolation("broken")
    monkeypatch.setitem(cli.COMMANDS, "analyze", boom)
    assert main(["analyze", "x"]) == 3

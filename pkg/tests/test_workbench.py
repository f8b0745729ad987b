import json

import jsonschema
import pytest

from qsuperopt.catalog import generate_random_db
from qsuperopt.errors import ConfigError, SchemaError, SqlSyntaxError
from qsuperopt.explore import ExploreConfig
from qsuperopt.latent import LatentConfig
from qsuperopt.nn import TrainConfig
from qsuperopt.workbench import (ExperimentConfig, break_even, compare_strategies, load_schema,
                                 run_experiment, strip_wall)


@pytest.fixture(scope="module")
def inst():
    db, sql = generate_random_db(4, 4)
    small = "SELECT COUNT(*) FROM t0 JOIN t1 ON t1.t0_id = t0.id WHERE t1.cat = 3"
    return db, [sql, small]


def _cfg(inst, strategy, **kw):
    db, queries = inst
    base = dict(db=db, queries=queries, strategy=strategy, error_level=2.0, seed=1, timing_repeats=1,
                explore=ExploreConfig(episodes=6, select_k=2, rounds=1, train=TrainConfig(epochs=10)),
                latent=LatentConfig(budget=3))
    base.update(kw)
    return ExperimentConfig(**base)


def test_baseline_executes_nothing_extra(inst):
    r = run_experiment(_cfg(inst, "baseline"), inst[0])
    for q in r["queries"]:
        assert q["plans_executed"] == 0
        assert q["chosen_plan"] == q["baseline_plan"]
        assert q["chosen_measured_cost"] == q["baseline_measured_cost"]


def test_topk1_is_baseline_plus_one(inst):
    r = run_experiment(_cfg(inst, "topk", k=1), inst[0])
    for q in r["queries"]:
        assert q["plans_executed"] == 1 and q["chosen_plan"] == q["baseline_plan"]
        assert q["break_even"] == "never"


def test_break_even_guard():
    assert break_even(10**9, 100, 100) == "never"
    assert break_even(10**9, 100, 200) == "never"
    assert break_even(1000, 300, 100) == 5.0


def test_report_schema_and_files(inst, tmp_path):
    out = tmp_path / "r.json"
    r = run_experiment(_cfg(inst, "latent", out=str(out), trace_dir=str(tmp_path / "tr")), inst[0])
    jsonschema.validate(r, load_schema())
    on_disk = json.loads(out.read_text())
    jsonschema.validate(on_disk, load_schema())
    assert len(out.with_suffix(".csv").read_text().splitlines()) == 1 + len(inst[1])
    assert sorted(p.name for p in (tmp_path / "tr").iterdir()) == ["trace_line1.csv", "trace_line2.csv"]


def test_compare_matrix(inst):
    cfgs = [_cfg(inst, s) for s in ("baseline", "topk", "explore", "latent")]
    a = compare_strategies(cfgs, inst[0])
    assert a["strategies"] == ["baseline", "topk3", "explore", "latent"]
    assert a["normalized_cost"]["baseline"] == [1.0, 1.0]
    for s in a["strategies"]:
        assert all(x <= 1.0 for x in a["normalized_cost"][s])
    b = compare_strategies(cfgs, inst[0])
    assert json.dumps(strip_wall(a), sort_keys=True) == json.dumps(strip_wall(b), sort_keys=True)
    for rep in a["reports"]:
        jsonschema.validate(rep, load_schema())


def test_errors_carry_line_numbers(inst, tmp_path):
    qf = tmp_path / "q.sql"
    qf.write_text("-- comment\n" + inst[1][1] + "\n\nSELECT COUNT(* FROM t0\n")
    with pytest.raises(SqlSyntaxError, match="^line 4:"):
        run_experiment(_cfg(inst, "baseline", queries=str(qf)), inst[0])
    qf.write_text("SELECT COUNT(*) FROM nope\n")
    with pytest.raises(SchemaError, match="^line 1:"):
        run_experiment(_cfg(inst, "baseline", queries=str(qf)), inst[0])


@pytest.mark.parametrize("kw", [dict(strategy="magic"), dict(k=0), dict(error_level=-1.0),
                                dict(metric="joules"), dict(queries="/nonexistent.sql")])
def test_config_validation(inst, kw):
    with pytest.raises(ConfigError):
        _cfg(inst, kw.pop("strategy", "baseline"), **kw).validate()

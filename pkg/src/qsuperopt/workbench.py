"""Seeded head-to-head experiments between planning strategies."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .catalog import Database, GenConfig, Statistics, generate_movie_db, load_db
from .engine import execute, measured_cost
from .errors import ConfigError, DataError, SuperoptError
from .explore import ExperienceStore, ExploreConfig, superoptimize_explore
from .latent import LatentConfig, superoptimize_latent
from .optimizer import BASELINE, optimize
from .sqlfront import bind, parse, read_query_file, templatize
from .topk import superoptimize_topk
from .util import stable_seed

STRATEGIES = ("baseline", "topk", "explore", "latent")
WALL_FIELDS = ("baseline_wall_ns", "chosen_wall_ns", "optimization_wall_ns", "break_even")
SCHEMA_PATH = Path(__file__).with_name("schemas") / "experiment_report.schema.json"


@dataclass
class ExperimentConfig:
    db: object  # Database, GenConfig, or a path written by save_db
    queries: object  # path to a query file, or a list of SQL strings
    strategy: str = "baseline"
    k: int = 3
    explore: ExploreConfig = field(default_factory=ExploreConfig)
    latent: LatentConfig = field(default_factory=LatentConfig)
    error_level: float = 0.0
    seed: int = 0
    metric: str = "tuples"
    time_budget_s: float | None = None
    store_path: str | None = None
    timing_repeats: int = 3
    trace_dir: str | None = None
    out: str | None = None

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"must be one of {', '.join(STRATEGIES)}")
        if self.metric not in ("tuples", "wall"):
            raise ConfigError("metric", "must be tuples or wall")
        if self.error_level < 0:
            raise ConfigError("error_level", "must be >= 0")
        if self.k < 1:
            raise ConfigError("k", "must be >= 1")
        if self.strategy == "explore":
            self.explore.validate()
        if self.strategy == "latent" and self.latent.budget < 1:
            raise ConfigError("latent.budget", "must be >= 1")
        if isinstance(self.queries, (str, Path)) and not Path(self.queries).exists():
            raise ConfigError("queries", f"file not found: {self.queries}")
        if isinstance(self.db, (str, Path)) and not Path(self.db).exists():
            raise ConfigError("db", f"database not found: {self.db}")


def resolve_db(spec) -> Database:
    if isinstance(spec, Database):
        return spec
    if isinstance(spec, GenConfig):
        return generate_movie_db(spec)
    return load_db(spec)


def _queries(spec):
    if isinstance(spec, (str, Path)):
        return read_query_file(spec)
    return [(i + 1, q) for i, q in enumerate(spec)]


def break_even(optimization_wall_ns, baseline_wall_ns, chosen_wall_ns):
    """Executions needed to repay the optimization time, or "never"."""
    saved = baseline_wall_ns - chosen_wall_ns
    if saved <= 0:
        return "never"
    return optimization_wall_ns / max(1, saved)


def _timed(db, plan, query, repeats):
    return min(execute(db, plan, query).wall_ns for _ in range(max(1, repeats)))


def _run_one(cfg, db, stats, query, line, sql, store):
    qseed = stable_seed(cfg.seed, "query", line)
    base = optimize(query, stats, BASELINE)
    base_res = execute(db, base.plan, query)
    base_cost = measured_cost(base_res, cfg.metric)
    t0 = time.perf_counter_ns()
    if cfg.strategy == "baseline":
        chosen, chosen_cost, executed, status = base.plan, base_cost, 0, "ok"
    elif cfg.strategy == "topk":
        r = superoptimize_topk(db, query, stats, cfg.k, metric=cfg.metric, time_budget_s=cfg.time_budget_s)
        chosen, chosen_cost, executed, status = r.plan, r.cost, len(r.executed), r.status
    elif cfg.strategy == "explore":
        ecfg = replace(cfg.explore, seed=qseed, metric=cfg.metric)
        r = superoptimize_explore(db, query, stats, ecfg, store, baseline=base.plan)
        chosen, chosen_cost, executed, status = r.plan, r.cost, len(r.report), r.status
    else:
        lcfg = replace(cfg.latent, seed=qseed, metric=cfg.metric)
        r = superoptimize_latent(db, query, stats, lcfg, initial_plan=base.plan)
        if cfg.trace_dir:
            write_trace(r.trace, Path(cfg.trace_dir) / f"trace_line{line}.csv")
        chosen, chosen_cost, executed, status = r.plan, r.cost, r.executions, r.status
    opt_ns = time.perf_counter_ns() - t0
    base_wall = _timed(db, base.plan, query, cfg.timing_repeats)
    chosen_wall = base_wall if chosen == base.plan else _timed(db, chosen, query, cfg.timing_repeats)
    return {
        "line": line,
        "sql": sql,
        "fingerprint": templatize(sql).fingerprint,
        "answer": int(base_res.answer),
        "baseline_plan": base.plan.canonical,
        "baseline_estimated_cost": float(base.estimated_cost),
        "baseline_measured_cost": float(base_cost),
        "chosen_plan": chosen.canonical,
        "chosen_measured_cost": float(chosen_cost),
        "plans_executed": int(executed),
        "status": status,
        "baseline_wall_ns": int(base_wall),
        "chosen_wall_ns": int(chosen_wall),
        "optimization_wall_ns": int(opt_ns),
        "break_even": break_even(opt_ns, base_wall, chosen_wall),
    }


def run_experiment(cfg: ExperimentConfig, db: Database = None):
    """Run one strategy over every query; errors name the failing line."""
    cfg.validate()
    db = db or resolve_db(cfg.db)
    stats = Statistics.collect(db, cfg.error_level, cfg.seed)
    store = ExperienceStore(cfg.store_path) if cfg.strategy == "explore" else None
    if store is not None and cfg.store_path and Path(cfg.store_path).exists():
        store = ExperienceStore.load(cfg.store_path)
    rows = []
    for line, sql in _queries(cfg.queries):
        try:
            query = bind(parse(sql), db.schema)
            if not query.is_bound():
                raise DataError(f"query has unbound parameters {query.params()}")
            rows.append(_run_one(cfg, db, stats, query, line, sql, store))
        except SuperoptError as exc:
            exc.line = line
            exc.args = (f"line {line}: {exc}",)
            raise
    report = {
        "strategy": cfg.strategy,
        "strategy_config": _strategy_config(cfg),
        "seed": cfg.seed,
        "error_level": cfg.error_level,
        "metric": cfg.metric,
        "queries": rows,
    }
    if cfg.out:
        write_report(report, cfg.out)
    return report


def _strategy_config(cfg):
    if cfg.strategy == "topk":
        return {"k": cfg.k, "time_budget_s": cfg.time_budget_s}
    if cfg.strategy == "explore":
        d = asdict(cfg.explore)
        d.pop("train")
        return d
    if cfg.strategy == "latent":
        return asdict(cfg.latent)
    return {}


def write_report(report, out):
    """``out`` gets JSON; a sibling ``.csv`` gets one row per query."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    rows = report.get("queries", [])
    if rows:
        with open(out.with_suffix(".csv"), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def write_trace(trace, path):
    """Latent-search trace: iteration, offset components, plan_id, cost, incumbent."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = len(trace[0].offset) if trace else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration"] + [f"v{i}" for i in range(dim)]
                   + ["plan_id", "measured_cost", "incumbent", "censored"])
        for t in trace:
            w.writerow([t.iteration] + [repr(float(x)) for x in t.offset]
                       + [t.plan.plan_id, repr(float(t.measured_cost)), repr(float(t.incumbent)), int(t.censored)])


def strip_wall(report):
    """Copy of a report without wall-clock fields (for determinism checks)."""
    if isinstance(report, dict):
        return {k: strip_wall(v) for k, v in report.items() if k not in WALL_FIELDS}
    if isinstance(report, list):
        return [strip_wall(v) for v in report]
    return report


def compare_strategies(configs, db: Database = None):
    """Matrix of measured cost normalized to the baseline plan (= 1.0).

    All configs must share db, queries, seed and error level.
    """
    configs = list(configs)
    if not configs:
        raise ConfigError("configs", "need at least one strategy")
    first = configs[0]
    for c in configs[1:]:
        if (c.seed, c.error_level, c.metric) != (first.seed, first.error_level, first.metric):
            raise ConfigError("configs", "strategies must share seed, error level and metric")
    db = db or resolve_db(first.db)
    names, reports, matrix = [], [], {}
    for c in configs:
        name = c.strategy if c.strategy != "topk" else f"topk{c.k}"
        r = run_experiment(replace(c, out=None), db)
        names.append(name)
        reports.append(r)
        matrix[name] = [q["chosen_measured_cost"] / q["baseline_measured_cost"]
                        if q["baseline_measured_cost"] > 0 else 1.0 for q in r["queries"]]
    return {
        "seed": first.seed,
        "error_level": first.error_level,
        "metric": first.metric,
        "strategies": names,
        "queries": [q["line"] for q in reports[0]["queries"]],
        "normalized_cost": matrix,
        "reports": reports,
    }


def load_schema():
    return json.loads(SCHEMA_PATH.read_text())

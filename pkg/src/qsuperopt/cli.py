"""Command-line workbench: ``qsuperopt <command> ...``.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import DataError, InvariantViolation, SuperoptError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(suppress):
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    p.add_argument("--error-level", type=float, default=d(0.0),
                   help="log-normal sigma of statistics noise (default 0)")
    p.add_argument("--cost", choices=("tuples", "wall"), default=d("tuples"),
                   help="measured cost metric (default tuples)")
    p.add_argument("--out", default=d(None), help="output path")
    return p


def build_parser():
    top = _Parser(prog="qsuperopt", description="Query superoptimization workbench.",
                  parents=[_global_flags(False)])
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_global_flags(True)]

    g = sub.add_parser("gen", parents=common, help="generate a database")
    g.add_argument("kind", choices=("movie", "random"))
    g.add_argument("--actors", type=int, default=100_000)
    g.add_argument("--movies", type=int, default=100_000)
    g.add_argument("--companies", type=int, default=1_000)
    g.add_argument("--stars-per-movie", type=int, default=5)
    g.add_argument("--skew", type=float, default=1.0)
    g.add_argument("--tables", type=int, default=4, help="table count for random instances")

    o = sub.add_parser("optimize", parents=common, help="plan queries with the cost-based optimizer")
    o.add_argument("queries", help="query file, one statement per line")
    o.add_argument("--db", required=True)
    o.add_argument("--k", type=int, default=1, help="emit the k best plans")
    o.add_argument("--time-budget", type=float, default=None,
                   help="execute ranked plans until this many seconds are spent")
    o.add_argument("--full-space", action="store_true", help="allow bushy plans and cross joins")

    s = sub.add_parser("superopt", parents=common, help="run a superoptimization strategy")
    s.add_argument("strategy", choices=("topk", "explore", "latent"))
    s.add_argument("queries")
    s.add_argument("--db", required=True)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--time-budget", type=float, default=None)
    s.add_argument("--epsilon", type=float, default=0.5)
    s.add_argument("--episodes", type=int, default=24)
    s.add_argument("--select-k", type=int, default=4)
    s.add_argument("--rounds", type=int, default=3)
    s.add_argument("--sample-fraction", type=float, default=0.1)
    s.add_argument("--store", default=None, help="experience store CSV (explore)")
    s.add_argument("--budget", type=int, default=20, help="executions after p1 (latent)")
    s.add_argument("--latent-dim", type=int, default=8)
    s.add_argument("--pool", choices=("auto", "enumerate", "episodes"), default="auto")
    s.add_argument("--trace-dir", default=None, help="write latent traces here")

    b = sub.add_parser("bench", parents=common, help="benchmarks")
    b.add_argument("target", choices=("bespoke",))
    b.add_argument("--db", default=None, help="movie database (default: generate the default one)")
    b.add_argument("--n", type=int, default=1000, help="number of Q1 instances")

    a = sub.add_parser("analyze", parents=common, help="bucket a query log by template lifespan")
    a.add_argument("log", help="CSV log: timestamp_iso8601,duration_ms,sql")

    c = sub.add_parser("compare", parents=common, help="strategy x query cost matrix")
    c.add_argument("queries")
    c.add_argument("--db", required=True)
    c.add_argument("--strategies", default="baseline,topk3,explore,latent",
                   help="comma list of baseline, topk<k>, explore, latent")
    c.add_argument("--budget", type=int, default=20)
    return top


def _opts(args):
    return {"seed": getattr(args, "seed", 0), "error_level": getattr(args, "error_level", 0.0),
            "cost": getattr(args, "cost", "tuples"), "out": getattr(args, "out", None)}


def _emit(obj, out, text=None):
    data = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(data)
    print(text if text is not None else data)


def cmd_gen(args, g):
    from .catalog import GenConfig, generate_movie_db, generate_random_db, save_db

    if not g["out"]:
        raise DataError("gen needs --out DIR")
    if args.kind == "movie":
        db = generate_movie_db(GenConfig(seed=g["seed"], n_actors=args.actors, n_movies=args.movies,
                                         n_companies=args.companies, stars_per_movie=args.stars_per_movie,
                                         skew=args.skew))
        save_db(db, g["out"])
    else:
        db, sql = generate_random_db(g["seed"], args.tables)
        save_db(db, g["out"])
        (Path(g["out"]) / "queries.sql").write_text(sql + "\n")
    print(json.dumps({"db": str(g["out"]), "tables": {t.name: db.table(t.name).row_count
                                                       for t in db.schema.tables}}, sort_keys=True))


def cmd_optimize(args, g):
    from .catalog import Statistics, load_db
    from .optimizer import BASELINE, FULL_SPACE, top_k_plans
    from .sqlfront import bind, parse, read_query_file
    from .topk import superoptimize_topk

    db = load_db(args.db)
    stats = Statistics.collect(db, g["error_level"], g["seed"])
    conf = FULL_SPACE if args.full_space else BASELINE
    out = []
    for line, sql in read_query_file(args.queries):
        try:
            query = bind(parse(sql), db.schema)
            if args.time_budget is not None:
                r = superoptimize_topk(db, query, stats, args.k, conf, g["cost"], args.time_budget)
                out.append({"line": line, "plan": r.plan.to_json(), "measured_cost": r.cost,
                            "status": r.status,
                            "executed": [{"plan": p.canonical, "cost": c, "censored": cen}
                                         for p, c, cen in r.executed]})
                continue
            ranked = top_k_plans(query, stats, args.k, conf)
        except SuperoptError as exc:
            exc.args = (f"line {line}: {exc}",)
            raise
        entry = [{"rank": i + 1, "plan": c.plan.to_json(), "canonical": c.plan.canonical,
                  "estimated_cost": c.estimated_cost, "estimated_rows": c.estimated_rows}
                 for i, c in enumerate(ranked)]
        out.append({"line": line, "plans": entry})
    _emit(out, g["out"])


def _experiment(args, g, strategy):
    from .explore import ExploreConfig
    from .latent import LatentConfig
    from .workbench import ExperimentConfig

    return ExperimentConfig(
        db=args.db, queries=args.queries, strategy=strategy, k=getattr(args, "k", 3),
        explore=ExploreConfig(epsilon=getattr(args, "epsilon", 0.5), episodes=getattr(args, "episodes", 24),
                              select_k=getattr(args, "select_k", 4), rounds=getattr(args, "rounds", 3),
                              sample_fraction=getattr(args, "sample_fraction", 0.1)),
        latent=LatentConfig(budget=getattr(args, "budget", 20), latent_dim=getattr(args, "latent_dim", 8),
                            pool_source=getattr(args, "pool", "auto")),
        error_level=g["error_level"], seed=g["seed"], metric=g["cost"],
        time_budget_s=getattr(args, "time_budget", None), store_path=getattr(args, "store", None),
        trace_dir=getattr(args, "trace_dir", None), out=g["out"])


def _summary(report):
    lines = [f"{'line':>5} {'baseline':>14} {'chosen':>14} {'ratio':>7} {'break-even':>12}"]
    for q in report["queries"]:
        b, c = q["baseline_measured_cost"], q["chosen_measured_cost"]
        be = q["break_even"] if isinstance(q["break_even"], str) else f"{q['break_even']:.1f}"
        lines.append(f"{q['line']:>5} {b:>14.0f} {c:>14.0f} {c / b if b else 1.0:>7.3f} {be:>12}")
    return "\n".join(lines)


def cmd_superopt(args, g):
    from .workbench import run_experiment

    print(_summary(run_experiment(_experiment(args, g, args.strategy))))


def cmd_bench(args, g):
    from .bespoke import bench_compare, format_report
    from .catalog import GenConfig, generate_movie_db, load_db

    db = load_db(args.db) if args.db else generate_movie_db(GenConfig(seed=g["seed"]))
    report = bench_compare(db, args.n, g["seed"])
    _emit(report, g["out"], format_report(report))


def cmd_analyze(args, g):
    from .workload import aggregate, bucket_report, read_log_csv, report_csv, report_text

    if not Path(args.log).exists():
        raise DataError(f"log file not found: {args.log}")
    stats = aggregate(read_log_csv(args.log))
    rows = bucket_report(stats)
    if g["out"]:
        report_csv(rows, g["out"])
    print(report_text(rows))
    if stats.skipped:
        print(f"skipped {stats.skipped} malformed records", file=sys.stderr)


def parse_strategies(text, args, g):
    from dataclasses import replace

    out = []
    for name in [s.strip() for s in text.split(",") if s.strip()]:
        if name.startswith("topk"):
            k = int(name[4:] or 3)
            out.append(replace(_experiment(args, g, "topk"), k=k, out=None))
        elif name in ("baseline", "explore", "latent"):
            out.append(replace(_experiment(args, g, name), out=None))
        else:
            raise DataError(f"unknown strategy {name!r}")
    return out


def cmd_compare(args, g):
    from .workbench import compare_strategies

    m = compare_strategies(parse_strategies(args.strategies, args, g))
    head = f"{'line':>5} " + " ".join(f"{s:>10}" for s in m["strategies"])
    rows = [head] + [f"{q:>5} " + " ".join(f"{m['normalized_cost'][s][i]:>10.3f}" for s in m["strategies"])
                     for i, q in enumerate(m["queries"])]
    _emit(m, g["out"], "\n".join(rows))


COMMANDS = {"gen": cmd_gen, "optimize": cmd_optimize, "superopt": cmd_superopt, "bench": cmd_bench,
            "analyze": cmd_analyze, "compare": cmd_compare}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args, _opts(args))
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SuperoptError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

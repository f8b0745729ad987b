"""Hand-built engine for the movie queries: hashmaps of compressed bitmaps.

Q1 is two hashmap lookups and one count-intersect. Q2 adds cumulative
rating bitmaps, so any ``(R1, R2]`` range is two count-intersections and
a subtraction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bitmap import CompressedBitmap
from .catalog import Q1_SQL, Q2_SQL, Statistics
from .engine import execute
from .errors import InvariantViolation, SchemaError
from .optimizer import BASELINE, optimize
from .plan import bind_plan
from .sqlfront import bind, bind_params, parse
from .util import rng_for

N_RATINGS = 5
_REQUIRED = {"Actor": ("id", "name"), "Movie": ("id", "rating"), "Company": ("id", "name"),
             "Stars": ("actor_id", "movie_id"), "Produces": ("company_id", "movie_id")}

_EMPTY = CompressedBitmap()


@dataclass
class BespokeIndex:
    actor_index: dict = field(default_factory=dict)
    company_index: dict = field(default_factory=dict)
    rating_prefix: list = field(default_factory=list)
    build_ns: int = 0


def _check_schema(db):
    names = {t.name: t for t in db.schema.tables}
    for table, cols in _REQUIRED.items():
        if table not in names:
            raise SchemaError(f"bespoke index needs table {table}")
        for c in cols:
            if c not in names[table].column_names:
                raise SchemaError(f"bespoke index needs column {table}.{c}")


def _bitmaps_by_key(key_ids, movie_ids, id_to_name):
    """name -> bitmap of the movies linked to any entity with that name."""
    out = {}
    if len(key_ids) == 0:
        return out
    order = np.argsort(key_ids, kind="stable")
    k, m = key_ids[order], movie_ids[order]
    cuts = np.flatnonzero(np.diff(k)) + 1
    groups = {}
    for ids, movies in zip(np.split(k, cuts), np.split(m, cuts)):
        name = id_to_name.get(int(ids[0]))
        if name is not None:
            groups.setdefault(name, []).append(movies)
    for name, parts in groups.items():
        out[name] = CompressedBitmap.from_ids(np.concatenate(parts))
    return out


def build_index(db) -> BespokeIndex:
    start = time.perf_counter_ns()
    _check_schema(db)
    actor, company, movie = db.table("Actor"), db.table("Company"), db.table("Movie")
    stars, produces = db.table("Stars"), db.table("Produces")
    actor_names = dict(zip(actor.column("id").tolist(), actor.decoded("name")))
    company_names = dict(zip(company.column("id").tolist(), company.decoded("name")))
    idx = BespokeIndex()
    idx.actor_index = _bitmaps_by_key(stars.column("actor_id"), stars.column("movie_id"), actor_names)
    idx.company_index = _bitmaps_by_key(produces.column("company_id"), produces.column("movie_id"),
                                        company_names)
    rating, mid = movie.column("rating"), movie.column("id")
    idx.rating_prefix = [CompressedBitmap.from_ids(mid[rating <= r + 1]) for r in range(N_RATINGS)]
    idx.build_ns = time.perf_counter_ns() - start
    return idx


def q1(index: BespokeIndex, actor, company) -> int:
    a = index.actor_index.get(actor)
    c = index.company_index.get(company)
    if a is None or c is None:
        return 0
    return a.intersect_cardinality(c)


def q2(index: BespokeIndex, actor, company, r1, r2) -> int:
    """Shared movies with rating in ``(r1, r2]``."""
    if not (0 <= r1 < r2 <= N_RATINGS):
        raise ValueError(f"need 0 <= R1 < R2 <= {N_RATINGS}, got R1={r1}, R2={r2}")
    a = index.actor_index.get(actor)
    c = index.company_index.get(company)
    if a is None or c is None:
        return 0
    shared = a.intersect(c)
    n = shared.intersect_cardinality(index.rating_prefix[r2 - 1])
    if r1 >= 1:
        n -= shared.intersect_cardinality(index.rating_prefix[r1 - 1])
    return n


def workload(db, n_queries, seed):
    """Seeded (actor, company) pairs drawn from actual Stars and Produces rows."""
    rng = rng_for("bespoke-workload", seed)
    actor, company = db.table("Actor"), db.table("Company")
    a_name = dict(zip(actor.column("id").tolist(), actor.decoded("name")))
    c_name = dict(zip(company.column("id").tolist(), company.decoded("name")))
    a_ids = db.table("Stars").column("actor_id")
    c_ids = db.table("Produces").column("company_id")
    ai = a_ids[rng.integers(0, len(a_ids), n_queries)] if len(a_ids) else np.zeros(n_queries, int)
    ci = c_ids[rng.integers(0, len(c_ids), n_queries)] if len(c_ids) else np.zeros(n_queries, int)
    return [(a_name.get(int(a), "?"), c_name.get(int(c), "?")) for a, c in zip(ai, ci)]


def generic_q1_plan(db, stats=None):
    """The default optimizer's plan for the Q1 template (parameters unbound)."""
    query = bind(parse(Q1_SQL), db.schema)
    stats = stats or Statistics.collect(db)
    return query, optimize(query, stats, BASELINE).plan


def _pct(xs, q):
    return float(np.percentile(np.asarray(xs, dtype=float), q))


def bench_compare(db, n_queries=1000, seed=0, index=None, stats=None):
    """Time Q1 through the generic engine and through the bespoke index.

    Every answer is cross-checked before any timing is reported.
    """
    if n_queries < 100:
        raise ValueError("n_queries must be >= 100")
    index = index or build_index(db)
    query, plan = generic_q1_plan(db, stats)
    pairs = workload(db, n_queries, seed)
    generic_ns, bespoke_ns, answers = [], [], []
    for a, c in pairs:
        bound_plan = bind_plan(plan, (a, c))
        bound_query = bind_params(query, (a, c))
        t0 = time.perf_counter_ns()
        g = execute(db, bound_plan, bound_query).answer
        t1 = time.perf_counter_ns()
        b = q1(index, a, c)
        t2 = time.perf_counter_ns()
        if g != b:
            raise InvariantViolation(f"bespoke answer {b} != engine answer {g} for ({a!r}, {c!r})")
        generic_ns.append(t1 - t0)
        bespoke_ns.append(t2 - t1)
        answers.append(int(b))
    gen = {"p50_ns": _pct(generic_ns, 50), "p90_ns": _pct(generic_ns, 90)}
    bes = {"p50_ns": _pct(bespoke_ns, 50), "p90_ns": _pct(bespoke_ns, 90)}
    return {
        "n_queries": n_queries,
        "seed": seed,
        "plan": plan.canonical,
        "generic": gen,
        "bespoke": bes,
        "speedup_p50": gen["p50_ns"] / max(bes["p50_ns"], 1.0),
        "speedup_p90": gen["p90_ns"] / max(bes["p90_ns"], 1.0),
        "index_build_ns": index.build_ns,
        "answers": answers,
        "nonzero_answers": int(sum(1 for x in answers if x)),
    }


def format_report(report) -> str:
    rows = [("", "P50 (us)", "P90 (us)"),
            ("generic", f"{report['generic']['p50_ns'] / 1e3:.1f}", f"{report['generic']['p90_ns'] / 1e3:.1f}"),
            ("bespoke", f"{report['bespoke']['p50_ns'] / 1e3:.1f}", f"{report['bespoke']['p90_ns'] / 1e3:.1f}"),
            ("speedup", f"{report['speedup_p50']:.1f}x", f"{report['speedup_p90']:.1f}x")]
    return "\n".join(f"{a:<10}{b:>12}{c:>12}" for a, b, c in rows)

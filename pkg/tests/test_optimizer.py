import numpy as np
import pytest

from qsuperopt.catalog import Statistics, true_cardinality
from qsuperopt.engine import execute
from qsuperopt.errors import CapacityError, PlanningError
from qsuperopt.optimizer import (BASELINE, FULL_SPACE, CostModel, count_plans, edge_selectivity,
                                 enumerate_all, estimate_cardinality, filter_selectivity,
                                 has_cross_join, log_ratio, optimize, top_k_plans)
from qsuperopt.plan import INDEX_LOOKUP, Join, height, join_nodes
from qsuperopt.sqlfront import ColumnRef, Filter, JoinEdge, Param, bind, parse

from conftest import make_db, random_instance


@pytest.fixture(scope="module")
def uniform2():
    """Estimates are exact for every subset of this query."""
    db = make_db({
        "A": ({"id": [0, 1], "x": [1, 2]}, {"x"}),
        "B": ({"id": [0, 1, 2, 3], "a_id": [0, 0, 1, 1]}, {"a_id"}),
    })
    q = bind(parse("SELECT COUNT(*) FROM A JOIN B ON B.a_id = A.id WHERE A.x = 1"), db.schema)
    return db, q, Statistics.collect(db)


@pytest.fixture(scope="module")
def star():
    """Two one-row-after-filter dimensions around a large fact table."""
    n = 4000
    rng = np.random.default_rng(0)
    db = make_db({
        "D1": ({"id": [0, 1], "c": [0, 1]}, set()),
        "D2": ({"id": [0, 1], "c": [0, 1]}, set()),
        "F": ({"id": list(range(n)), "d1": rng.integers(0, 2, n), "d2": rng.integers(0, 2, n)}, set()),
    })
    q = bind(parse("SELECT COUNT(*) FROM F JOIN D1 ON F.d1 = D1.id JOIN D2 ON F.d2 = D2.id "
                   "WHERE D1.c = 0 AND D2.c = 1"), db.schema)
    return db, q, Statistics.collect(db)


def test_selectivities(chain3):
    s = Statistics.collect(chain3)
    assert filter_selectivity(Filter(ColumnRef("A", "x"), "=", 1), s) == 0.5
    assert filter_selectivity(Filter(ColumnRef("B", "y"), "<", 6), s) == 0.5
    assert filter_selectivity(Filter(ColumnRef("B", "y"), ">=", 6), s) == 0.5
    assert filter_selectivity(Filter(ColumnRef("B", "y"), "<", 100), s) == 1.0
    assert filter_selectivity(Filter(ColumnRef("B", "y"), ">", Param(1)), s) == pytest.approx(1 / 3)
    e = JoinEdge.of(ColumnRef("A", "id"), ColumnRef("B", "a_id"))
    assert edge_selectivity(e, s) == 1 / 3
    est = estimate_cardinality(s, ["A", "B"], [Filter(ColumnRef("A", "x"), "=", 1)], [e])
    assert est.estimated_rows == pytest.approx(3 * 5 * 0.5 / 3)


def test_cost_equals_work_when_estimates_are_exact(uniform2):
    db, q, s = uniform2
    model = CostModel(q, s)
    plans = enumerate_all(q, db.schema)
    assert len(plans) == 3 * 2 * 2  # algorithms x orders x A's access paths
    for p in plans:
        assert model.costed(p).estimated_cost == execute(db, p, q).tuples_processed, p.canonical


def test_index_lookup_chosen_with_exact_stats(uniform2):
    db, _, s = uniform2
    q = bind(parse("SELECT COUNT(*) FROM A WHERE A.x = 2"), db.schema)
    assert optimize(q, s).plan.root.path == INDEX_LOOKUP
    assert len(enumerate_all(q, db.schema)) == 2


@pytest.mark.parametrize("seed, n", [(s, n) for s in range(5) for n in (2, 3, 4)])
def test_dp_matches_brute_force_optimum(seed, n):
    db, q, s = random_instance(seed, n)
    model = CostModel(q, s)
    best = min(model.costed(p).estimated_cost for p in enumerate_all(q, db.schema))
    assert optimize(q, s, FULL_SPACE).estimated_cost == pytest.approx(best, rel=1e-12)
    base = optimize(q, s, BASELINE)
    assert base.estimated_cost >= best * (1 - 1e-12)
    assert not has_cross_join(base.plan)
    assert all(j.right.__class__.__name__ == "Access" for j in join_nodes(base.plan.root))


def test_baseline_misses_cross_join_optimum(star):
    db, q, s = star
    base, full = optimize(q, s, BASELINE), optimize(q, s, FULL_SPACE)
    model = CostModel(q, s)
    assert full.estimated_cost == pytest.approx(min(model.costed(p).estimated_cost
                                                    for p in enumerate_all(q, db.schema)))
    assert has_cross_join(full.plan) and not has_cross_join(base.plan)
    assert base.estimated_cost > full.estimated_cost
    assert execute(db, full.plan, q).tuples_processed < execute(db, base.plan, q).tuples_processed


def test_top_k_contract():
    db, q, s = random_instance(3, 4, 2.0)
    ranked = top_k_plans(q, s, 25, BASELINE)
    costs = [c.estimated_cost for c in ranked]
    assert costs == sorted(costs)
    assert len({c.plan for c in ranked}) == len(ranked)
    assert ranked[0].plan == optimize(q, s).plan
    assert [c.plan.plan_id for c in ranked] == list(range(1, 26))
    assert top_k_plans(q, s, 1)[0].plan == ranked[0].plan
    with pytest.raises(ValueError):
        top_k_plans(q, s, 0)


def test_top_k_exhausts_small_space(uniform2):
    db, q, s = uniform2
    model = CostModel(q, s)
    everything = enumerate_all(q, db.schema)
    ranked = top_k_plans(q, s, 1000, FULL_SPACE)
    want = sorted(everything, key=lambda p: (model.costed(p).estimated_cost, p.canonical))
    assert [c.plan for c in ranked] == want


def test_enumeration_counts_and_refusal():
    db, q, _ = random_instance(4, 4)
    plans = enumerate_all(q, db.schema)
    assert len(plans) == count_plans(q, db.schema)
    assert len({p.canonical for p in plans}) == len(plans)
    assert any(isinstance(p.root.left, Join) and isinstance(p.root.right, Join) for p in plans)  # bushy
    assert max(height(p.root) for p in plans) == 3
    db6, q6, _ = random_instance(0, 6)
    with pytest.raises(CapacityError) as e:
        enumerate_all(q6, db6.schema)
    assert str(count_plans(q6, db6.schema)) in str(e.value)


def test_disconnected_query_needs_cross_joins(chain3):
    s = Statistics.collect(chain3)
    q = bind(parse("SELECT COUNT(*) FROM A CROSS JOIN C"), chain3.schema)
    with pytest.raises(PlanningError):
        optimize(q, s, BASELINE)
    assert has_cross_join(optimize(q, s, FULL_SPACE).plan)


def test_estimate_error_grows_with_joins():
    """Mean |log(estimate/true)| on connected prefixes, error level 2."""
    by_size = {1: [], 4: []}
    for seed in range(15):
        db, q, s = random_instance(seed, 5, 2.0)
        # grow a connected set from t0 along edges
        chosen = ["t0"]
        while len(chosen) < 4:
            nxt = sorted(t for e in q.join_edges for t in e.tables()
                         if t not in chosen and set(e.tables()) & set(chosen))[0]
            chosen.append(nxt)
        for size in by_size:
            tabs = chosen[:size]
            fs = [f for f in q.filters if f.column.table in tabs]
            es = [e for e in q.join_edges if set(e.tables()) <= set(tabs)]
            est = estimate_cardinality(s, tabs, fs, es).estimated_rows
            by_size[size].append(log_ratio(est, true_cardinality(db, tabs, fs, es)))
    assert np.mean(by_size[4]) > np.mean(by_size[1])

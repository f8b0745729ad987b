import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsuperopt.catalog import (MOVIE_SCHEMA, GenConfig, Statistics, TableDef, column_stats,
                               generate_movie_db, generate_random_db, load_db, save_db,
                               true_cardinality, zipf_weights)
from qsuperopt.errors import ConfigError, SchemaError
from qsuperopt.sqlfront import ColumnRef, Filter, JoinEdge, bind, parse

from conftest import make_db


def test_schema_rejects_bad_definitions():
    with pytest.raises(SchemaError):
        TableDef("T", (("id", "int64"), ("id", "int64")), "id")
    with pytest.raises(SchemaError):
        TableDef("T", (("id", "int64"),), "nope")
    with pytest.raises(SchemaError):
        TableDef("T", (("id", "blob"),), "id")
    assert "id" in TableDef("T", (("id", "int64"),), "id").indexes


def test_movie_db_shape_and_determinism():
    cfg = GenConfig(seed=3, n_actors=200, n_movies=150, n_companies=10, stars_per_movie=4)
    a, b = generate_movie_db(cfg), generate_movie_db(cfg)
    assert a.table("Stars").row_count == 150 * 4
    assert a.table("Produces").row_count == 150
    for t in MOVIE_SCHEMA.tables:
        for c in t.column_names:
            assert np.array_equal(a.table(t.name).column(c), b.table(t.name).column(c))
    stars = a.table("Stars")
    pairs = set(zip(stars.column("movie_id").tolist(), stars.column("actor_id").tolist()))
    assert len(pairs) == stars.row_count  # no actor twice in one movie
    r = a.table("Movie").column("rating")
    assert r.min() >= 1 and r.max() <= 5


def test_gen_config_validation():
    with pytest.raises(ConfigError):
        GenConfig(n_actors=0).validate()
    with pytest.raises(ConfigError):
        GenConfig(rating_distribution=(0.5, 0.5, 0.1, 0.0, 0.0)).validate()
    with pytest.raises(ConfigError):
        GenConfig(n_actors=3, stars_per_movie=4).validate()


def test_zipf_weights_normalized_and_skewed():
    w = zipf_weights(100, 1.0, np.random.default_rng(0))
    assert w.sum() == pytest.approx(1.0)
    assert sorted(w)[-1] / sorted(w)[0] == pytest.approx(100.0)
    flat = zipf_weights(10, 0.0, np.random.default_rng(0))
    assert np.allclose(flat, 0.1)


def test_save_load_round_trip(tmp_path, small_movie_db):
    save_db(small_movie_db, tmp_path / "db")
    back = load_db(tmp_path / "db")
    for t in MOVIE_SCHEMA.tables:
        for c in t.column_names:
            assert back.table(t.name).decoded(c) == small_movie_db.table(t.name).decoded(c)
    assert back.schema == small_movie_db.schema


def test_load_missing_dir(tmp_path):
    with pytest.raises(SchemaError):
        load_db(tmp_path / "absent")


def test_stats_exact_and_noisy():
    db, _ = generate_random_db(1, 3)
    exact = column_stats(db, "t1", "cat")
    assert exact.ndv == len(np.unique(db.table("t1").column("cat")))
    noisy = [column_stats(db, "t1", "cat", 2.0, s).ndv for s in range(20)]
    assert len(set(noisy)) > 1
    assert all(1 <= v <= db.table("t1").row_count for v in noisy)
    assert column_stats(db, "t1", "cat", 2.0, 5) == column_stats(db, "t1", "cat", 2.0, 5)
    with pytest.raises(ConfigError):
        column_stats(db, "t1", "cat", -1.0)


def test_empty_table_stats():
    db = make_db({"E": ({"id": [], "v": []}, set())})
    s = column_stats(db, "E", "v")
    assert s.ndv == 1 and s.row_count == 0


def _brute_count(db, query):
    tabs = list(query.tables)
    rows = [range(db.table(t).row_count) for t in tabs]
    n = 0
    for combo in itertools.product(*rows):
        pick = dict(zip(tabs, combo))
        ok = all(db.table(f.column.table).filter_mask(f.column.column, f.op, f.value)[pick[f.column.table]]
                 for f in query.filters)
        ok = ok and all(db.table(e.left.table).column(e.left.column)[pick[e.left.table]]
                        == db.table(e.right.table).column(e.right.column)[pick[e.right.table]]
                        for e in query.join_edges)
        n += ok
    return n


def test_true_cardinality_matches_cartesian_oracle(chain3):
    from conftest import CHAIN3_SQL

    q = bind(parse(CHAIN3_SQL), chain3.schema)
    # hand count: A rows 0,1 -> B rows 0,1,2 -> C rows (b0: 2), (b1: 1), (b2: 0) = 3
    assert true_cardinality(chain3, q.tables, q.filters, q.join_edges) == 3
    assert _brute_count(chain3, q) == 3


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=6), st.lists(st.integers(0, 3), min_size=1, max_size=6),
       st.lists(st.integers(0, 3), min_size=1, max_size=6), st.integers(0, 3))
def test_true_cardinality_property(xs, ys, zs, lit):
    db = make_db({
        "P": ({"id": list(range(len(xs))), "k": xs}, set()),
        "Q": ({"id": list(range(len(ys))), "k": ys, "m": ys[::-1]}, set()),
        "R": ({"id": list(range(len(zs))), "m": zs}, set()),
    })
    q = bind(parse(f"SELECT COUNT(*) FROM P JOIN Q ON P.k = Q.k JOIN R ON R.m = Q.m WHERE P.k <= {lit}"),
             db.schema)
    assert true_cardinality(db, q.tables, q.filters, q.join_edges) == _brute_count(db, q)


def test_true_cardinality_cross_product_and_errors(chain3):
    assert true_cardinality(chain3, ["A", "C"]) == 3 * 6
    with pytest.raises(SchemaError):
        true_cardinality(chain3, ["A"], [Filter(ColumnRef("A", "nope"), "=", 1)])
    with pytest.raises(SchemaError):
        true_cardinality(chain3, ["A"], joins=[JoinEdge.of(ColumnRef("A", "id"), ColumnRef("B", "a_id"))])


def test_index_lookup_matches_filter(small_movie_db):
    rows = small_movie_db.index_lookup("Actor", "name", "actor_5")
    assert rows.tolist() == np.flatnonzero(small_movie_db.table("Actor").filter_mask("name", "=", "actor_5")).tolist()
    assert len(small_movie_db.index_lookup("Actor", "name", "nobody")) == 0
    with pytest.raises(SchemaError):
        small_movie_db.index("Movie", "rating")


def test_statistics_encode_literal(small_movie_db):
    s = Statistics.collect(small_movie_db)
    assert s.encode_literal("Actor", "name", "no such actor") == -1
    assert s.row_counts["Movie"] == 400


def test_random_db_is_tree_and_deterministic():
    a, sa = generate_random_db(11, 5)
    b, sb = generate_random_db(11, 5)
    assert sa == sb
    q = bind(parse(sa), a.schema)
    assert len(q.join_edges) == 4
    assert all(np.array_equal(a.table(t).column("cat"), b.table(t).column("cat")) for t in a.tables)
    with pytest.raises(ConfigError):
        generate_random_db(0, 0)

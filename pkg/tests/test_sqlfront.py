import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsuperopt.catalog import MOVIE_SCHEMA, Q1_SQL, Q2_SQL
from qsuperopt.errors import SchemaError, SqlSyntaxError
from qsuperopt.sqlfront import (ColumnRef, Filter, JoinEdge, Param, bind, bind_params, normalize_sql,
                                parse, read_query_file, templatize, to_sql)


def test_parse_q1():
    q = bind(parse(Q1_SQL), MOVIE_SCHEMA)
    assert set(q.tables) == {"Actor", "Stars", "Movie", "Produces", "Company"}
    assert len(q.join_edges) == 4
    assert q.params() == [1, 2]
    assert not q.is_bound()
    assert bind_params(q, ["actor_1", "company_2"]).is_bound()


def test_parse_q2_ranges():
    q = bind(parse(Q2_SQL), MOVIE_SCHEMA)
    ops = sorted(f.op for f in q.filters_on("Movie"))
    assert ops == ["<=", ">"]
    assert q.params() == [1, 2, 3, 4]


def test_unqualified_columns_resolve():
    q = bind(parse("SELECT COUNT(*) FROM Movie WHERE rating >= 4"), MOVIE_SCHEMA)
    assert q.filters[0].column == ColumnRef("Movie", "rating")


def test_cross_join_and_where_edges():
    q = parse("select count(*) from A cross join B where A.x = B.y and A.z < 3")
    assert q.join_edges == (JoinEdge.of(ColumnRef("A", "x"), ColumnRef("B", "y")),)
    assert q.filters == (Filter(ColumnRef("A", "z"), "<", 3),)


@pytest.mark.parametrize("sql, offset", [
    ("SELECT * FROM A", 7),
    ("SELECT COUNT(*) FROM", 20),
    ("SELECT COUNT(*) FROM A WHERE A.x ~ 3", 33),
    ("SELECT COUNT(*) FROM A JOIN B ON A.x < B.y", 37),
    ("SELECT COUNT(*) FROM A WHERE A.x < B.y", 29),
    ("SELECT COUNT(*) FROM A extra", 23),
])
def test_syntax_errors_carry_offset(sql, offset):
    with pytest.raises(SqlSyntaxError) as e:
        parse(sql)
    assert e.value.offset == offset


def test_syntax_error_self_join_and_duplicate_table():
    with pytest.raises(SqlSyntaxError):
        parse("SELECT COUNT(*) FROM A JOIN B ON A.x = A.y")
    with pytest.raises(SqlSyntaxError):
        parse("SELECT COUNT(*) FROM A CROSS JOIN A")


def test_bind_errors():
    with pytest.raises(SchemaError):
        bind(parse("SELECT COUNT(*) FROM Nope"), MOVIE_SCHEMA)
    with pytest.raises(SchemaError):
        bind(parse("SELECT COUNT(*) FROM Movie WHERE Movie.nope = 1"), MOVIE_SCHEMA)
    with pytest.raises(SchemaError):  # id is in both tables
        bind(parse("SELECT COUNT(*) FROM Movie CROSS JOIN Actor WHERE id = 1"), MOVIE_SCHEMA)
    with pytest.raises(SchemaError):
        bind(parse("SELECT COUNT(*) FROM Actor WHERE name < 'b'"), MOVIE_SCHEMA)
    with pytest.raises(SchemaError):
        bind(parse("SELECT COUNT(*) FROM Actor WHERE name = 3"), MOVIE_SCHEMA)
    with pytest.raises(SchemaError):
        bind_params(bind(parse(Q1_SQL), MOVIE_SCHEMA), ["only one"])


def test_round_trip_q1_q2():
    for sql in (Q1_SQL, Q2_SQL):
        q = bind(parse(sql), MOVIE_SCHEMA)
        assert bind(parse(to_sql(q)), MOVIE_SCHEMA) == q


_tables = ["A", "B", "C", "D"]


@st.composite
def queries(draw):
    n = draw(st.integers(1, 4))
    tabs = _tables[:n]
    edges = set()
    for i in range(1, n):
        if draw(st.booleans()):
            j = draw(st.integers(0, i - 1))
            edges.add(JoinEdge.of(ColumnRef(tabs[i], "k"), ColumnRef(tabs[j], "k")))
    filters = set()
    for t in tabs:
        if draw(st.booleans()):
            op = draw(st.sampled_from(["=", "<", "<=", ">", ">="]))
            v = draw(st.one_of(st.integers(-50, 50), st.builds(Param, st.integers(1, 4)),
                               st.text("ab' c", min_size=0, max_size=4)))
            filters.add(Filter(ColumnRef(t, "v"), op, v))
    from qsuperopt.sqlfront import LogicalQuery

    return LogicalQuery(tuple(tabs), tuple(edges), tuple(filters))


@settings(max_examples=150, deadline=None)
@given(queries())
def test_print_parse_round_trip(q):
    assert parse(to_sql(q)) == q


def test_read_query_file(tmp_path):
    p = tmp_path / "q.sql"
    p.write_text("-- header\n\nSELECT COUNT(*) FROM A -- tail\nSELECT COUNT(*) FROM A WHERE A.s = '--x'\n")
    assert read_query_file(p) == [(3, "SELECT COUNT(*) FROM A"),
                                  (4, "SELECT COUNT(*) FROM A WHERE A.s = '--x'")]


def test_templatize_masks_literals():
    a = templatize("SELECT COUNT(*) FROM t WHERE x = 3 AND s = 'abc'")
    b = templatize("select  count(*) from T where X = 99 and s = 'zz'  -- note")
    c = templatize("SELECT COUNT(*) FROM t WHERE x = 3")
    assert a.fingerprint == b.fingerprint != c.fingerprint
    assert a.parameter_count == 2
    assert normalize_sql("a = 1.5e3 AND b = ''")[1] == 2
    assert len(a.fingerprint) == 32
    assert templatize("SELECT COUNT(*) FROM t WHERE a = -5").fingerprint == \
        templatize("SELECT COUNT(*) FROM t WHERE a = 5").fingerprint
    assert templatize("SELECT COUNT(*) FROM t WHERE a = b - 5").parameter_count == 1


@settings(max_examples=100, deadline=None)
@given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
def test_templatize_literal_invariance(x, y):
    assert (templatize(f"SELECT COUNT(*) FROM t WHERE a = {x}").fingerprint
            == templatize(f"SELECT COUNT(*) FROM t WHERE a = {y}").fingerprint)


@given(st.text(max_size=60))
@settings(max_examples=200, deadline=None)
def test_normalize_is_total(s):
    normalize_sql(s)

import functools

import numpy as np
import pytest

from qsuperopt.catalog import (Database, GenConfig, Schema, Statistics, Table, TableDef,
                               generate_movie_db, generate_random_db)
from qsuperopt.sqlfront import bind, parse


@functools.lru_cache(maxsize=None)
def random_instance(seed, n_tables=4, error_level=0.0):
    db, sql = generate_random_db(seed, n_tables)
    query = bind(parse(sql), db.schema)
    return db, query, Statistics.collect(db, error_level, seed)


@pytest.fixture(scope="session")
def small_movie_db():
    return generate_movie_db(GenConfig(seed=7, n_actors=300, n_movies=400, n_companies=20,
                                       stars_per_movie=3))


def make_db(spec, seed=0):
    """spec: {table: (columns dict, indexes)} with int64 columns only; ``id`` is the pk."""
    tdefs, tables = [], {}
    for name, (cols, idx) in spec.items():
        tdef = TableDef(name, tuple((c, "int64") for c in cols), "id", frozenset(idx))
        tdefs.append(tdef)
        tables[name] = Table(tdef, {c: np.asarray(v, dtype=np.int64) for c, v in cols.items()})
    return Database(Schema(tuple(tdefs)), tables, seed)


@pytest.fixture(scope="session")
def chain3():
    """A(id, x) <- B(id, a_id, y) <- C(id, b_id); small enough for hand counts."""
    return make_db({
        "A": ({"id": [0, 1, 2], "x": [1, 1, 2]}, {"x"}),
        "B": ({"id": [0, 1, 2, 3, 4], "a_id": [0, 0, 1, 2, 2], "y": [5, 6, 5, 7, 5]}, {"a_id"}),
        "C": ({"id": [0, 1, 2, 3, 4, 5], "b_id": [0, 0, 1, 3, 4, 4]}, {"b_id"}),
    })


CHAIN3_SQL = "SELECT COUNT(*) FROM A JOIN B ON B.a_id = A.id JOIN C ON C.b_id = B.id WHERE A.x = 1"


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

"""Schemas, in-memory columnar tables, synthetic data and column statistics.

String columns are dictionary-encoded: the table stores int64 codes and a
per-column dictionary, so every operator downstream works on numbers only.
"""

from __future__ import annotations

import json
import math
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, SchemaError
from .util import rng_for, stable_seed

COLUMN_TYPES = ("int64", "float64", "string")


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple  # of (name, type)
    primary_key: str
    indexes: frozenset = frozenset()

    def __post_init__(self):
        names = [c for c, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column in table {self.name}")
        for c, t in self.columns:
            if t not in COLUMN_TYPES:
                raise SchemaError(f"{self.name}.{c}: unknown type {t!r}")
        if self.primary_key not in names:
            raise SchemaError(f"{self.name}: primary key {self.primary_key!r} is not a column")
        for ix in self.indexes:
            if ix not in names:
                raise SchemaError(f"{self.name}: index on unknown column {ix!r}")
        # the primary key is always indexed
        object.__setattr__(self, "indexes", frozenset(self.indexes) | {self.primary_key})

    @property
    def column_names(self):
        return [c for c, _ in self.columns]

    def column_type(self, column):
        for c, t in self.columns:
            if c == column:
                return t
        raise SchemaError(f"unknown column {self.name}.{column}")


@dataclass(frozen=True)
class Schema:
    tables: tuple  # of TableDef

    def __post_init__(self):
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate table name")

    def table(self, name):
        for t in self.tables:
            if t.name == name:
                return t
        raise SchemaError(f"unknown table {name!r}")

    def has_table(self, name):
        return any(t.name == name for t in self.tables)

    def has_column(self, table, column):
        return self.has_table(table) and column in self.table(table).column_names


class Table:
    """Immutable columnar table. Strings are held as int64 dictionary codes."""

    def __init__(self, tdef: TableDef, columns: dict, dictionaries: dict | None = None):
        self.tdef = tdef
        self.name = tdef.name
        self.dictionaries = dict(dictionaries or {})
        self._codes = {k: {s: i for i, s in enumerate(v)} for k, v in self.dictionaries.items()}
        self.columns = {}
        n = None
        for cname, ctype in tdef.columns:
            if cname not in columns:
                raise SchemaError(f"{tdef.name}: missing column data for {cname}")
            arr = np.asarray(columns[cname], dtype=np.float64 if ctype == "float64" else np.int64)
            arr.setflags(write=False)
            if n is None:
                n = len(arr)
            elif len(arr) != n:
                raise SchemaError(f"{tdef.name}: column {cname} has {len(arr)} rows, expected {n}")
            if ctype == "string" and cname not in self.dictionaries:
                raise SchemaError(f"{tdef.name}.{cname}: string column without dictionary")
            self.columns[cname] = arr
        self.row_count = int(n or 0)
        pk = self.columns[tdef.primary_key]
        if len(np.unique(pk)) != self.row_count:
            raise SchemaError(f"{tdef.name}: primary key values are not distinct")

    @classmethod
    def from_values(cls, tdef: TableDef, values: dict):
        """Build from raw values, dictionary-encoding string columns."""
        cols, dicts = {}, {}
        for cname, ctype in tdef.columns:
            v = values[cname]
            if ctype == "string":
                dictionary, codes = [], {}
                out = np.empty(len(v), dtype=np.int64)
                for i, s in enumerate(v):
                    code = codes.get(s)
                    if code is None:
                        code = codes[s] = len(dictionary)
                        dictionary.append(s)
                    out[i] = code
                cols[cname], dicts[cname] = out, dictionary
            else:
                cols[cname] = v
        return cls(tdef, cols, dicts)

    def column(self, name):
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"unknown column {self.name}.{name}") from None

    def decoded(self, name):
        arr = self.column(name)
        if name in self.dictionaries:
            d = self.dictionaries[name]
            return [d[c] for c in arr]
        return arr.tolist()

    def encode_literal(self, column, value):
        """Map a query literal onto the column's physical domain.

        Unknown strings map to -1, which matches no row.
        """
        ctype = self.tdef.column_type(column)
        if ctype == "string":
            if not isinstance(value, str):
                raise SchemaError(f"{self.name}.{column} is a string column, got {value!r}")
            return self._codes[column].get(value, -1)
        if isinstance(value, str):
            raise SchemaError(f"{self.name}.{column} is numeric, got string {value!r}")
        return value

    def filter_mask(self, column, op, value):
        ctype = self.tdef.column_type(column)
        if ctype == "string" and op != "=":
            raise SchemaError(f"range comparison on string column {self.name}.{column}")
        v = self.encode_literal(column, value)
        col = self.column(column)
        if op == "=":
            return col == v
        if op == "<":
            return col < v
        if op == "<=":
            return col <= v
        if op == ">":
            return col > v
        if op == ">=":
            return col >= v
        raise SchemaError(f"unsupported comparison {op!r}")


class Database:
    """Schema plus tables. Immutable after construction."""

    def __init__(self, schema: Schema, tables: dict, seed: int = 0):
        self.schema = schema
        self.tables = dict(tables)
        self.seed = int(seed)
        for tdef in schema.tables:
            if tdef.name not in self.tables:
                raise SchemaError(f"missing table data for {tdef.name}")
        self._indexes = {}
        self._lock = threading.Lock()

    def table(self, name) -> Table:
        try:
            return self.tables[name]
        except KeyError:
            raise SchemaError(f"unknown table {name!r}") from None

    def index(self, table, column):
        """Sorted (values, row ids) pair for an indexed column, built once."""
        key = (table, column)
        ix = self._indexes.get(key)
        if ix is None:
            if column not in self.schema.table(table).indexes:
                raise SchemaError(f"no index on {table}.{column}")
            col = self.table(table).column(column)
            order = np.argsort(col, kind="stable")
            ix = (col[order], order)
            with self._lock:
                self._indexes.setdefault(key, ix)
        return ix

    def index_lookup(self, table, column, value):
        values, order = self.index(table, column)
        v = self.table(table).encode_literal(column, value)
        lo = np.searchsorted(values, v, "left")
        hi = np.searchsorted(values, v, "right")
        return np.sort(order[lo:hi])


# ----------------------------------------------------------------------
# movie / actor / company data


MOVIE_SCHEMA = Schema((
    TableDef("Actor", (("id", "int64"), ("name", "string")), "id", frozenset({"name"})),
    TableDef("Movie", (("id", "int64"), ("title", "string"), ("rating", "int64")), "id"),
    TableDef("Company", (("id", "int64"), ("name", "string")), "id", frozenset({"name"})),
    TableDef("Stars", (("id", "int64"), ("actor_id", "int64"), ("movie_id", "int64")), "id",
             frozenset({"actor_id", "movie_id"})),
    TableDef("Produces", (("id", "int64"), ("company_id", "int64"), ("movie_id", "int64")), "id",
             frozenset({"company_id", "movie_id"})),
))

Q1_SQL = ("SELECT COUNT(*) FROM Actor JOIN Stars ON Stars.actor_id = Actor.id "
          "JOIN Movie ON Movie.id = Stars.movie_id "
          "JOIN Produces ON Produces.movie_id = Movie.id "
          "JOIN Company ON Company.id = Produces.company_id "
          "WHERE Actor.name = $1 AND Company.name = $2")

Q2_SQL = Q1_SQL + " AND Movie.rating > $3 AND Movie.rating <= $4"


def actor_name(i):
    return f"actor_{i}"


def company_name(i):
    return f"company_{i}"


@dataclass
class GenConfig:
    seed: int = 0
    n_actors: int = 100_000
    n_movies: int = 100_000
    n_companies: int = 1_000
    stars_per_movie: int = 5
    companies_per_movie: int = 1
    skew: float = 1.0
    rating_distribution: tuple = (0.05, 0.15, 0.35, 0.30, 0.15)

    def validate(self):
        for name in ("n_actors", "n_movies", "n_companies", "stars_per_movie", "companies_per_movie"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.stars_per_movie > self.n_actors:
            raise ConfigError("stars_per_movie", "cannot exceed n_actors")
        if self.companies_per_movie > self.n_companies:
            raise ConfigError("companies_per_movie", "cannot exceed n_companies")
        if not self.skew >= 0 or not math.isfinite(self.skew):
            raise ConfigError("skew", "must be a finite real >= 0")
        p = tuple(float(x) for x in self.rating_distribution)
        if len(p) != 5 or any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-9:
            raise ConfigError("rating_distribution", "must be 5 non-negative probabilities summing to 1")


def zipf_weights(n, skew, rng):
    """Popularity weights ~ rank^-skew, assigned to ids in a seeded random order."""
    w = np.arange(1, n + 1, dtype=np.float64) ** -float(skew)
    w = w[rng.permutation(n)]
    return w / w.sum()


def _draw_distinct(rng, weights, rows, per_row):
    """``rows`` x ``per_row`` weighted draws, entries distinct within each row."""
    n = len(weights)
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0

    def draw(shape):
        return np.minimum(np.searchsorted(cdf, rng.random(shape), "right"), n - 1)

    out = draw((rows, per_row))
    if per_row == 1:
        return out
    for _ in range(50):
        s = np.sort(out, axis=1)
        bad = np.nonzero((s[:, 1:] == s[:, :-1]).any(axis=1))[0]
        if len(bad) == 0:
            return out
        out[bad] = draw((len(bad), per_row))
    for r in bad:
        out[r] = rng.choice(n, size=per_row, replace=False, p=weights)
    return out


def generate_movie_db(cfg: GenConfig = None) -> Database:
    cfg = cfg or GenConfig()
    cfg.validate()
    a_rng, c_rng, r_rng, s_rng, p_rng = (np.random.default_rng(s) for s in
                                         np.random.SeedSequence(int(cfg.seed)).spawn(5))
    na, nm, nc = cfg.n_actors, cfg.n_movies, cfg.n_companies
    actor_w = zipf_weights(na, cfg.skew, a_rng)
    company_w = zipf_weights(nc, cfg.skew, c_rng)
    ratings = r_rng.choice(5, size=nm, p=np.asarray(cfg.rating_distribution, dtype=float)) + 1

    stars = _draw_distinct(s_rng, actor_w, nm, cfg.stars_per_movie)
    produces = _draw_distinct(p_rng, company_w, nm, cfg.companies_per_movie)
    movie_ids = np.arange(nm, dtype=np.int64)

    s = MOVIE_SCHEMA
    tables = {
        "Actor": Table.from_values(s.table("Actor"), {
            "id": np.arange(na), "name": [actor_name(i) for i in range(na)]}),
        "Movie": Table.from_values(s.table("Movie"), {
            "id": movie_ids, "title": [f"movie_{i}" for i in range(nm)], "rating": ratings}),
        "Company": Table.from_values(s.table("Company"), {
            "id": np.arange(nc), "name": [company_name(i) for i in range(nc)]}),
        "Stars": Table(s.table("Stars"), {
            "id": np.arange(stars.size), "actor_id": stars.ravel(),
            "movie_id": np.repeat(movie_ids, cfg.stars_per_movie)}),
        "Produces": Table(s.table("Produces"), {
            "id": np.arange(produces.size), "company_id": produces.ravel(),
            "movie_id": np.repeat(movie_ids, cfg.companies_per_movie)}),
    }
    return Database(s, tables, seed=cfg.seed)


# ----------------------------------------------------------------------
# random skewed join instances


def generate_random_db(seed, n_tables=4, min_rows=20, max_rows=20000, skew=1.2, fanout=(2.0, 20.0)):
    """A random tree-shaped FK schema with Zipf-skewed foreign keys.

    The root is dimension-sized; every child holds ``fanout`` times as many
    rows as its parent (log-uniform, capped at ``max_rows``), so join order
    decides how large intermediate results get.

    Returns ``(db, sql)`` where ``sql`` is a COUNT(*) query joining every
    table along its FK edges with a few selective filters.
    """
    if n_tables < 1:
        raise ConfigError("n_tables", "must be >= 1")
    rng = rng_for("random-db", int(seed), n_tables)
    names = [f"t{i}" for i in range(n_tables)]
    parent = {i: int(rng.integers(0, i)) for i in range(1, n_tables)}
    rows = np.zeros(n_tables, dtype=int)
    rows[0] = int(np.exp(rng.uniform(math.log(min_rows), math.log(max(min_rows, max_rows // 40)))))
    for i in range(1, n_tables):
        f = math.exp(rng.uniform(math.log(fanout[0]), math.log(fanout[1])))
        rows[i] = int(min(max_rows, max(min_rows, rows[parent[i]] * f)))
    cat_ndv = rng.integers(3, 40, n_tables)

    tdefs, data = [], {}
    for i, name in enumerate(names):
        cols = [("id", "int64"), ("cat", "int64"), ("val", "int64")]
        idx = {"cat"}
        vals = {
            "id": np.arange(rows[i]),
            "cat": rng.choice(cat_ndv[i], rows[i], p=zipf_weights(cat_ndv[i], skew, rng)),
            "val": rng.integers(0, 1000, rows[i]),
        }
        if i in parent:
            p = parent[i]
            fk = f"{names[p]}_id"
            cols.append((fk, "int64"))
            idx.add(fk)
            vals[fk] = rng.choice(rows[p], rows[i], p=zipf_weights(rows[p], skew, rng))
        tdefs.append(TableDef(name, tuple(cols), "id", frozenset(idx)))
        data[name] = vals
    schema = Schema(tuple(tdefs))
    db = Database(schema, {t.name: Table.from_values(t, data[t.name]) for t in tdefs},
                  seed=int(seed))

    joins = [f"JOIN {names[i]} ON {names[i]}.{names[p]}_id = {names[p]}.id"
             for i, p in sorted(parent.items())]
    filters = []
    for i in rng.permutation(n_tables)[:max(1, n_tables // 2)]:
        name = names[i]
        if rng.random() < 0.7:
            cats = db.table(name).column("cat")
            filters.append(f"{name}.cat = {int(cats[rng.integers(0, len(cats))])}")
        else:
            filters.append(f"{name}.val < {int(rng.integers(100, 900))}")
    sql = f"SELECT COUNT(*) FROM {names[0]}"
    if joins:
        sql += " " + " ".join(joins)
    sql += " WHERE " + " AND ".join(filters)
    return db, sql


# ----------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class ColumnStats:
    ndv: int
    min: float
    max: float
    row_count: int
    noise_seed: int


def column_stats(db: Database, table, column, error_level=0.0, seed=None) -> ColumnStats:
    """ndv/min/max of a column; ndv perturbed by a seeded lognormal factor.

    For an empty table ndv is reported as 1 and the bounds as 0.
    """
    if error_level < 0:
        raise ConfigError("error_level", "must be >= 0")
    t = db.table(table)
    col = t.column(column)
    n = t.row_count
    seed = db.seed if seed is None else seed
    noise_seed = stable_seed("stats", int(seed), table, column)
    if n == 0:
        return ColumnStats(1, 0.0, 0.0, 0, noise_seed)
    ndv = len(np.unique(col))
    if error_level > 0:
        factor = math.exp(np.random.default_rng(noise_seed).normal(0.0, error_level))
        ndv = int(min(max(round(ndv * factor), 1), n))
    return ColumnStats(ndv, float(col.min()), float(col.max()), n, noise_seed)


@dataclass
class Statistics:
    """Every column's stats plus exact table row counts."""

    row_counts: dict
    columns: dict = field(default_factory=dict)  # (table, column) -> ColumnStats
    error_level: float = 0.0
    schema: Schema = None
    tables: dict = None  # only for encoding literals of string columns

    @classmethod
    def collect(cls, db: Database, error_level=0.0, seed=None):
        cols = {}
        for tdef in db.schema.tables:
            for c in tdef.column_names:
                cols[(tdef.name, c)] = column_stats(db, tdef.name, c, error_level, seed)
        return cls({t: db.table(t).row_count for t in db.tables}, cols, error_level,
                   db.schema, db.tables)

    def get(self, table, column) -> ColumnStats:
        from .errors import EstimationError

        try:
            return self.columns[(table, column)]
        except KeyError:
            raise EstimationError(f"no statistics for {table}.{column}") from None

    def encode_literal(self, table, column, value):
        if self.tables is not None and table in self.tables:
            return self.tables[table].encode_literal(column, value)
        return value


# ----------------------------------------------------------------------
# oracle


def _filtered_rows(db, table, filters, sample):
    t = db.table(table)
    mask = np.ones(t.row_count, dtype=bool)
    if sample is not None and table in sample:
        mask &= sample[table]
    for f in filters:
        mask &= t.filter_mask(f.column.column, f.op, f.value)
    return [int(r) for r in np.nonzero(mask)[0]]


def true_cardinality(db: Database, tables, filters=(), joins=(), sample=None) -> int:
    """Exact COUNT(*) of a conjunctive query by naive row-at-a-time search.

    ``filters`` carry ``.column`` (table, column) plus ``.op``/``.value``;
    ``joins`` carry ``.left``/``.right`` column refs. ``sample`` optionally
    maps table -> boolean row mask restricting the base tables.
    """
    tables = list(tables)
    for f in filters:
        if f.column.table not in tables or not db.schema.has_column(f.column.table, f.column.column):
            raise SchemaError(f"unknown filter column {f.column.table}.{f.column.column}")
    for j in joins:
        for ref in (j.left, j.right):
            if ref.table not in tables or not db.schema.has_column(ref.table, ref.column):
                raise SchemaError(f"unknown join column {ref.table}.{ref.column}")
    rows = {t: _filtered_rows(db, t, [f for f in filters if f.column.table == t], sample)
            for t in tables}
    cols = {t: db.table(t).columns for t in tables}

    # visit connected tables first so each step can probe a value map
    order, remaining = [], list(tables)
    while remaining:
        nxt = next((t for t in remaining if any(
            {j.left.table, j.right.table} == {t, o} for o in order for j in joins)), remaining[0])
        order.append(nxt)
        remaining.remove(nxt)

    def edges_to_prior(i):
        t, prior = order[i], set(order[:i])
        out = []
        for j in joins:
            if j.left.table == t and j.right.table in prior:
                out.append((j.left.column, j.right))
            elif j.right.table == t and j.left.table in prior:
                out.append((j.right.column, j.left))
        return out

    plans = []
    for i, t in enumerate(order):
        edges = edges_to_prior(i)
        probe = None
        if edges:
            col, _ = edges[0]
            probe = {}
            for r in rows[t]:
                probe.setdefault(cols[t][col][r], []).append(r)
        plans.append((t, edges, probe))

    assignment = {}

    def count(i):
        if i == len(order):
            return 1
        t, edges, probe = plans[i]
        if probe is None:
            cands = rows[t]
        else:
            ref = edges[0][1]
            cands = probe.get(cols[ref.table][ref.column][assignment[ref.table]], ())
        total = 0
        for r in cands:
            if all(cols[t][c][r] == cols[ref.table][ref.column][assignment[ref.table]]
                   for c, ref in edges[1:]):
                assignment[t] = r
                total += count(i + 1)
        assignment.pop(t, None)
        return total

    return count(0)


# ----------------------------------------------------------------------
# persistence: directory of length-prefixed column files + JSON manifest

_MAGIC = b"QSCOL1"
_TYPE_TAG = {"int64": 0, "float64": 1, "string": 2}


def _write_column(path: Path, ctype, values):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BQ", _TYPE_TAG[ctype], len(values)))
        if ctype == "string":
            for s in values:
                b = s.encode("utf-8")
                fh.write(struct.pack("<I", len(b)))
                fh.write(b)
        else:
            fh.write(np.asarray(values, dtype="<f8" if ctype == "float64" else "<i8").tobytes())


def _read_column(path: Path, ctype):
    data = path.read_bytes()
    if data[:6] != _MAGIC:
        raise SchemaError(f"{path}: bad column file header")
    tag, n = struct.unpack_from("<BQ", data, 6)
    if tag != _TYPE_TAG[ctype]:
        raise SchemaError(f"{path}: column type mismatch")
    off = 6 + struct.calcsize("<BQ")
    if ctype == "string":
        out = []
        for _ in range(n):
            (ln,) = struct.unpack_from("<I", data, off)
            off += 4
            out.append(data[off:off + ln].decode("utf-8"))
            off += ln
        return out
    dt = "<f8" if ctype == "float64" else "<i8"
    return np.frombuffer(data, dtype=dt, count=n, offset=off).copy()


def save_db(db: Database, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {"format": "qsuperopt-db/1", "seed": db.seed, "tables": []}
    for tdef in db.schema.tables:
        t = db.table(tdef.name)
        manifest["tables"].append({
            "name": tdef.name,
            "columns": [list(c) for c in tdef.columns],
            "primary_key": tdef.primary_key,
            "indexes": sorted(tdef.indexes),
            "row_count": t.row_count,
        })
        for cname, ctype in tdef.columns:
            vals = t.decoded(cname) if ctype == "string" else t.column(cname)
            _write_column(path / f"{tdef.name}.{cname}.col", ctype, vals)
    (path / "schema.json").write_text(json.dumps(manifest, indent=2))


def load_db(path) -> Database:
    path = Path(path)
    try:
        manifest = json.loads((path / "schema.json").read_text())
    except FileNotFoundError:
        raise SchemaError(f"{path}: no schema.json") from None
    tdefs, tables = [], {}
    for spec in manifest["tables"]:
        tdef = TableDef(spec["name"], tuple(tuple(c) for c in spec["columns"]),
                        spec["primary_key"], frozenset(spec["indexes"]))
        vals = {c: _read_column(path / f"{tdef.name}.{c}.col", t) for c, t in tdef.columns}
        tdefs.append(tdef)
        tables[tdef.name] = Table.from_values(tdef, vals)
    return Database(Schema(tuple(tdefs)), tables, seed=manifest.get("seed", 0))

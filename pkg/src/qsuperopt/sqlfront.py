"""Parser for the COUNT(*) equijoin SQL subset, and lexical templatization.

Accepted grammar::

    query  := SELECT COUNT ( * ) FROM ident join* [WHERE cond (AND cond)*] [;]
    join   := [INNER] JOIN ident ON eq (AND eq)* | CROSS JOIN ident
    cond   := colref op (literal | $n | colref)
    colref := ident [. ident]
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace

from .errors import SchemaError, SqlSyntaxError

OPS = ("=", "<", "<=", ">", ">=")
_KEYWORDS = {"select", "count", "from", "join", "inner", "cross", "on", "where", "and"}


@dataclass(frozen=True, order=True)
class Param:
    index: int

    def __str__(self):
        return f"${self.index}"


@dataclass(frozen=True, order=True)
class ColumnRef:
    table: str | None
    column: str

    def __str__(self):
        return f"{self.table}.{self.column}" if self.table else self.column


@dataclass(frozen=True)
class Filter:
    column: ColumnRef
    op: str
    value: object  # int, float, str or Param

    def sort_key(self):
        return (str(self.column), self.op, type(self.value).__name__, str(self.value))


@dataclass(frozen=True, order=True)
class JoinEdge:
    left: ColumnRef
    right: ColumnRef

    @classmethod
    def of(cls, a: ColumnRef, b: ColumnRef):
        return cls(*sorted((a, b), key=lambda r: (r.table or "", r.column)))

    def tables(self):
        return (self.left.table, self.right.table)

    def __str__(self):
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class LogicalQuery:
    tables: tuple
    join_edges: tuple = ()
    filters: tuple = ()
    aggregate: str = "COUNT_STAR"

    def __post_init__(self):
        object.__setattr__(self, "join_edges", tuple(sorted(set(self.join_edges))))
        object.__setattr__(self, "filters", tuple(sorted(set(self.filters), key=Filter.sort_key)))

    def filters_on(self, table):
        return tuple(f for f in self.filters if f.column.table == table)

    def params(self):
        return sorted({f.value.index for f in self.filters if isinstance(f.value, Param)})

    def is_bound(self):
        return not self.params()


# ----------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>--[^\n]*)
  | (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<string>'(?:[^']|'')*')
  | (?P<param>\$\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|[=<>(),.*;\-])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int  # byte offset


def _tokenize(sql):
    toks, pos = [], 0
    byte = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {sql[pos]!r}", byte)
        kind, text = m.lastgroup, m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, text, byte))
        byte += len(text.encode("utf-8"))
        pos = m.end()
    toks.append(_Tok("eof", "", byte))
    return toks


class _Parser:
    def __init__(self, sql):
        self.toks = _tokenize(sql)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, what):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise SqlSyntaxError(f"expected {what}, found {found}", t.offset)

    def keyword(self, kw):
        t = self.tok
        if t.kind == "ident" and t.text.lower() == kw:
            self.i += 1
            return True
        return False

    def expect_keyword(self, kw):
        if not self.keyword(kw):
            self.error(kw.upper())

    def punct(self, p):
        if self.tok.kind == "op" and self.tok.text == p:
            self.i += 1
            return True
        return False

    def expect_punct(self, p):
        if not self.punct(p):
            self.error(repr(p))

    def ident(self):
        t = self.tok
        if t.kind != "ident" or t.text.lower() in _KEYWORDS:
            self.error("identifier")
        self.i += 1
        return t.text

    def colref(self):
        a = self.ident()
        if self.punct("."):
            return ColumnRef(a, self.ident())
        return ColumnRef(None, a)

    def operand(self):
        t = self.tok
        neg = False
        if t.kind == "op" and t.text == "-":
            neg = True
            self.i += 1
            t = self.tok
            if t.kind != "number":
                self.error("number")
        if t.kind == "number":
            self.i += 1
            v = float(t.text) if any(c in t.text for c in ".eE") else int(t.text)
            return -v if neg else v
        if t.kind == "string":
            self.i += 1
            return t.text[1:-1].replace("''", "'")
        if t.kind == "param":
            self.i += 1
            n = int(t.text[1:])
            if n < 1:
                raise SqlSyntaxError("parameter slots start at $1", t.offset)
            return Param(n)
        if t.kind == "ident":
            return self.colref()
        self.error("literal, parameter or column")

    def comparison(self, edges, filters, equality_only=False):
        start = self.tok.offset
        left = self.colref()
        t = self.tok
        if t.kind != "op" or t.text not in OPS:
            self.error("comparison operator")
        if equality_only and t.text != "=":
            self.error("'='")
        self.i += 1
        right = self.operand()
        if isinstance(right, ColumnRef):
            if t.text != "=":
                raise SqlSyntaxError("only equality comparisons between columns", start)
            edges.append((left, right, start))
        elif equality_only:
            raise SqlSyntaxError("ON clause must compare two columns", start)
        else:
            filters.append(Filter(left, t.text, right))

    def parse(self):
        self.expect_keyword("select")
        if not self.keyword("count"):
            self.error("COUNT(*)")
        self.expect_punct("(")
        self.expect_punct("*")
        self.expect_punct(")")
        self.expect_keyword("from")
        tables = [self.ident()]
        edges, filters = [], []
        while True:
            if self.keyword("cross"):
                self.expect_keyword("join")
                tables.append(self.ident())
                continue
            inner = self.keyword("inner")
            if self.keyword("join"):
                tables.append(self.ident())
                self.expect_keyword("on")
                self.comparison(edges, filters, equality_only=True)
                while self.keyword("and"):
                    self.comparison(edges, filters, equality_only=True)
                continue
            if inner:
                self.error("JOIN")
            break
        if self.keyword("where"):
            self.comparison(edges, filters)
            while self.keyword("and"):
                self.comparison(edges, filters)
        self.punct(";")
        if self.tok.kind != "eof":
            self.error("end of statement")
        return tables, edges, filters


def parse(sql: str) -> LogicalQuery:
    """Parse one statement. Column refs may stay unqualified until :func:`bind`."""
    tables, edges, filters = _Parser(sql).parse()
    seen = set()
    for t in tables:
        if t in seen:
            raise SqlSyntaxError(f"table {t!r} listed twice", 0)
        seen.add(t)
    join_edges = []
    for a, b, off in edges:
        if a.table is not None and a.table == b.table:
            raise SqlSyntaxError("join condition compares two columns of one table", off)
        join_edges.append(JoinEdge.of(a, b))
    return LogicalQuery(tuple(tables), tuple(join_edges), tuple(filters))


def _resolve(ref: ColumnRef, tables, schema):
    if ref.table is not None:
        if ref.table not in tables:
            raise SchemaError(f"column {ref} references a table not in FROM")
        if not schema.has_column(ref.table, ref.column):
            raise SchemaError(f"unknown column {ref}")
        return ref
    owners = [t for t in tables if schema.has_column(t, ref.column)]
    if not owners:
        raise SchemaError(f"unknown column {ref.column}")
    if len(owners) > 1:
        raise SchemaError(f"ambiguous column {ref.column} (in {', '.join(owners)})")
    return ColumnRef(owners[0], ref.column)


def bind(query: LogicalQuery, schema) -> LogicalQuery:
    """Validate against ``schema`` and qualify every column reference."""
    for t in query.tables:
        if not schema.has_table(t):
            raise SchemaError(f"unknown table {t!r}")
    edges = []
    for e in query.join_edges:
        a, b = _resolve(e.left, query.tables, schema), _resolve(e.right, query.tables, schema)
        if a.table == b.table:
            raise SchemaError(f"join condition {e} compares two columns of one table")
        edges.append(JoinEdge.of(a, b))
    filters = []
    for f in query.filters:
        ref = _resolve(f.column, query.tables, schema)
        ctype = schema.table(ref.table).column_type(ref.column)
        if ctype == "string" and f.op != "=":
            raise SchemaError(f"range comparison on string column {ref}")
        if not isinstance(f.value, Param) and (ctype == "string") != isinstance(f.value, str):
            raise SchemaError(f"literal {f.value!r} does not match type of {ref}")
        filters.append(Filter(ref, f.op, f.value))
    return LogicalQuery(query.tables, tuple(edges), tuple(filters), query.aggregate)


def bind_params(query: LogicalQuery, params) -> LogicalQuery:
    """Substitute ``$n`` slots; ``params`` is a sequence ($1 first) or dict."""
    if not isinstance(params, dict):
        params = {i + 1: v for i, v in enumerate(params)}
    out = []
    for f in query.filters:
        if isinstance(f.value, Param):
            if f.value.index not in params:
                raise SchemaError(f"no value for parameter {f.value}")
            f = Filter(f.column, f.op, params[f.value.index])
        out.append(f)
    return replace(query, filters=tuple(out))


def _literal_sql(v):
    if isinstance(v, Param):
        return str(v)
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return repr(v)


def to_sql(query: LogicalQuery) -> str:
    """Pretty-print; :func:`parse` of the result yields an equal query."""
    placed = [query.tables[0]]
    used = set()
    parts = [f"SELECT COUNT(*) FROM {query.tables[0]}"]
    for t in query.tables[1:]:
        conds = [e for e in query.join_edges if e not in used and t in e.tables()
                 and (set(e.tables()) - {t}) <= set(placed)]
        if conds:
            used.update(conds)
            parts.append(f"JOIN {t} ON " + " AND ".join(str(e) for e in conds))
        else:
            parts.append(f"CROSS JOIN {t}")
        placed.append(t)
    where = [str(e) for e in query.join_edges if e not in used]
    where += [f"{f.column} {f.op} {_literal_sql(f.value)}" for f in query.filters]
    if where:
        parts.append("WHERE " + " AND ".join(where))
    return " ".join(parts)


def _strip_comment(line):
    in_str = False
    for i, ch in enumerate(line):
        if ch == "'":
            in_str = not in_str
        elif not in_str and line.startswith("--", i):
            return line[:i]
    return line


def read_query_file(path):
    """Statements one per line; ``--`` comments and blank lines ignored.

    Returns ``(line_number, sql)`` pairs.
    """
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            text = _strip_comment(line).strip()
            if text:
                out.append((n, text))
    return out


# ----------------------------------------------------------------------
# templatization


@dataclass(frozen=True)
class QueryTemplate:
    fingerprint: str
    raw_example: str
    parameter_count: int
    normalized: str = field(default="", compare=False)


_LEX_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>--[^\n]*|/\*.*?(?:\*/|\Z))
  | (?P<string>'(?:[^']|'')*(?:'|\Z))
  | (?P<qident>"(?:[^"]|"")*(?:"|\Z)|`[^`]*(?:`|\Z))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<param>\$\d+|\?|:[A-Za-z_]\w*)
  | (?P<op><=|>=|<>|!=|\|\||::|.)
""", re.VERBOSE | re.DOTALL)


_UNARY_AFTER = {"=", "<", ">", "<=", ">=", "<>", "!=", "(", ",", "+", "-", "*", "/", "and", "or",
                "not", "where", "select", "between", "in", "on", "then", "else", "when", "like"}


def _unary_context(before):
    return not before or before[-1] in _UNARY_AFTER


def normalize_sql(sql: str):
    """Lower-cased token stream with literals masked as ``?1, ?2, ...``.

    Returns ``(normalized_text, literal_count)``. Total: never raises.
    """
    out, n = [], 0
    for m in _LEX_RE.finditer(sql):
        kind, text = m.lastgroup, m.group()
        if kind in ("ws", "comment"):
            continue
        if kind == "number" and out and out[-1] == "-" and _unary_context(out[:-1]):
            out.pop()  # unary minus belongs to the literal
        if kind in ("string", "number"):
            n += 1
            out.append(f"?{n}")
        elif kind == "ident":
            out.append(text.lower())
        else:
            out.append(text)
    return " ".join(out), n


def templatize(sql: str) -> QueryTemplate:
    normalized, n = normalize_sql(sql)
    fp = hashlib.blake2b(normalized.encode("utf-8"), digest_size=16).hexdigest()
    return QueryTemplate(fp, sql, n, normalized)

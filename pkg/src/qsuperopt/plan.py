"""Physical plan trees, canonical serialization and JSON interchange."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

from .errors import PlanValidationError
from .sqlfront import ColumnRef, Filter, JoinEdge, LogicalQuery, Param

FULL_SCAN = "FullScan"
INDEX_LOOKUP = "IndexLookup"
ACCESS_PATHS = (FULL_SCAN, INDEX_LOOKUP)

HASH = "Hash"
SORT_MERGE = "SortMerge"
NESTED_LOOP = "NestedLoop"
JOIN_ALGORITHMS = (HASH, SORT_MERGE, NESTED_LOOP)

_ALG_TAG = {HASH: "HJ", SORT_MERGE: "MJ", NESTED_LOOP: "NL"}


def _lit(v):
    if isinstance(v, Param):
        return str(v)
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return repr(v)


@dataclass(frozen=True)
class Access:
    table: str
    path: str = FULL_SCAN
    index_column: str | None = None
    filters: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(sorted(set(self.filters), key=Filter.sort_key)))

    @cached_property
    def tables(self):
        return frozenset((self.table,))

    @cached_property
    def canonical(self):
        head = "FS(" + self.table if self.path == FULL_SCAN else f"IX({self.table}:{self.index_column}"
        if self.filters:
            head += ";" + ",".join(f"{f.column.column}{f.op}{_lit(f.value)}" for f in self.filters)
        return head + ")"

    def index_filter(self):
        for f in self.filters:
            if f.op == "=" and f.column.column == self.index_column:
                return f
        return None


@dataclass(frozen=True)
class Join:
    algorithm: str
    condition: tuple  # of JoinEdge; empty means cross join
    left: object
    right: object

    def __post_init__(self):
        object.__setattr__(self, "condition", tuple(sorted(set(self.condition))))

    @cached_property
    def tables(self):
        return self.left.tables | self.right.tables

    @cached_property
    def canonical(self):
        cond = "&".join(f"{e.left}={e.right}" for e in self.condition)
        return f"{_ALG_TAG[self.algorithm]}[{cond}]({self.left.canonical},{self.right.canonical})"

    @property
    def is_cross(self):
        return not self.condition

    def oriented_keys(self):
        """(left_ref, right_ref) per condition edge, oriented to the children."""
        out = []
        for e in self.condition:
            if e.left.table in self.left.tables:
                out.append((e.left, e.right))
            else:
                out.append((e.right, e.left))
        return out


@dataclass(frozen=True)
class QueryPlan:
    root: object
    plan_id: int = field(default=0, compare=False)

    @property
    def canonical(self):
        return self.root.canonical

    @property
    def tables(self):
        return self.root.tables

    def __hash__(self):
        return hash(self.root.canonical)

    def __eq__(self, other):
        return isinstance(other, QueryPlan) and self.root.canonical == other.root.canonical

    def with_id(self, plan_id):
        return QueryPlan(self.root, plan_id)

    def to_json(self):
        return {"plan_id": self.plan_id, "root": node_to_json(self.root)}

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(node_from_json(obj["root"]), int(obj.get("plan_id", 0)))


def iter_nodes(node):
    """Post-order traversal: left subtree, right subtree, then the node."""
    if isinstance(node, Join):
        yield from iter_nodes(node.left)
        yield from iter_nodes(node.right)
    yield node


def leaves(node):
    return [n for n in iter_nodes(node) if isinstance(n, Access)]


def join_nodes(node):
    return [n for n in iter_nodes(node) if isinstance(n, Join)]


def height(node):
    if isinstance(node, Join):
        return 1 + max(height(node.left), height(node.right))
    return 0


def bind_plan(plan: QueryPlan, params) -> QueryPlan:
    """Substitute ``$n`` slots in every pushed filter."""
    if not isinstance(params, dict):
        params = {i + 1: v for i, v in enumerate(params)}

    def sub(node):
        if isinstance(node, Access):
            fs = []
            for f in node.filters:
                if isinstance(f.value, Param):
                    if f.value.index not in params:
                        raise PlanValidationError(f"no value for parameter {f.value}")
                    f = Filter(f.column, f.op, params[f.value.index])
                fs.append(f)
            return Access(node.table, node.path, node.index_column, tuple(fs))
        return Join(node.algorithm, node.condition, sub(node.left), sub(node.right))

    return QueryPlan(sub(plan.root), plan.plan_id)


# ----------------------------------------------------------------------
# JSON


def _ref_from(s):
    t, c = s.split(".", 1)
    return ColumnRef(t, c)


def node_to_json(node):
    if isinstance(node, Access):
        return {
            "kind": "access",
            "table": node.table,
            "path": node.path,
            "index_column": node.index_column,
            "filters": [{"column": str(f.column), "op": f.op,
                         "value": {"param": f.value.index} if isinstance(f.value, Param) else f.value}
                        for f in node.filters],
        }
    return {
        "kind": "join",
        "algorithm": node.algorithm,
        "condition": [[str(e.left), str(e.right)] for e in node.condition] or None,
        "left": node_to_json(node.left),
        "right": node_to_json(node.right),
    }


def node_from_json(obj):
    try:
        kind = obj["kind"]
        if kind == "access":
            fs = []
            for f in obj.get("filters", []):
                v = f["value"]
                if isinstance(v, dict):
                    v = Param(int(v["param"]))
                fs.append(Filter(_ref_from(f["column"]), f["op"], v))
            return Access(obj["table"], obj.get("path", FULL_SCAN), obj.get("index_column"), tuple(fs))
        if kind == "join":
            cond = tuple(JoinEdge.of(_ref_from(a), _ref_from(b)) for a, b in (obj.get("condition") or []))
            return Join(obj["algorithm"], cond, node_from_json(obj["left"]), node_from_json(obj["right"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanValidationError(f"malformed plan JSON: {exc}") from None
    raise PlanValidationError(f"unknown plan node kind {kind!r}")


# ----------------------------------------------------------------------
# validation


def validate_plan(plan: QueryPlan, schema, query: LogicalQuery | None = None, require_bound=True):
    """Raise :class:`PlanValidationError` unless ``plan`` is well formed.

    With ``query`` the plan must also implement exactly that query: every
    table once, all its filters pushed to the owning leaf, and each join
    carrying exactly the query edges that cross between its children.
    """
    seen = []
    for node in iter_nodes(plan.root):
        if isinstance(node, Access):
            if not schema.has_table(node.table):
                raise PlanValidationError(f"unknown table {node.table!r}")
            seen.append(node.table)
            tdef = schema.table(node.table)
            for f in node.filters:
                if f.column.table != node.table or not schema.has_column(node.table, f.column.column):
                    raise PlanValidationError(f"filter {f.column} does not belong to {node.table}")
                if f.op not in ("=", "<", "<=", ">", ">="):
                    raise PlanValidationError(f"bad operator {f.op!r}")
                if require_bound and isinstance(f.value, Param):
                    raise PlanValidationError(f"unbound parameter {f.value} on {f.column}")
            if node.path == INDEX_LOOKUP:
                if node.index_column not in tdef.indexes:
                    raise PlanValidationError(f"no index on {node.table}.{node.index_column}")
                if node.index_filter() is None:
                    raise PlanValidationError(
                        f"IndexLookup on {node.table}.{node.index_column} needs an equality filter")
            elif node.path != FULL_SCAN:
                raise PlanValidationError(f"unknown access path {node.path!r}")
        else:
            if node.algorithm not in JOIN_ALGORITHMS:
                raise PlanValidationError(f"unknown join algorithm {node.algorithm!r}")
            if node.left.tables & node.right.tables:
                raise PlanValidationError("a table appears on both sides of a join")
            if node.is_cross and node.algorithm != NESTED_LOOP:
                raise PlanValidationError("cross joins must use NestedLoop")
            for e in node.condition:
                a, b = e.left, e.right
                sides = ({a.table, b.table} & node.left.tables, {a.table, b.table} & node.right.tables)
                if len(sides[0]) != 1 or len(sides[1]) != 1:
                    raise PlanValidationError(f"join condition {e} does not span the two inputs")
                for ref in (a, b):
                    if not schema.has_column(ref.table, ref.column):
                        raise PlanValidationError(f"unknown column {ref}")
    if len(set(seen)) != len(seen):
        raise PlanValidationError("a table appears more than once")
    if query is None:
        return
    if set(seen) != set(query.tables):
        raise PlanValidationError(
            f"plan tables {sorted(seen)} differ from query tables {sorted(query.tables)}")
    for node in iter_nodes(plan.root):
        if isinstance(node, Access):
            want = {(str(f.column), f.op) for f in query.filters_on(node.table)}
            got = {(str(f.column), f.op) for f in node.filters}
            if want != got:
                raise PlanValidationError(f"filters on {node.table} do not match the query")
        else:
            crossing = {e for e in query.join_edges
                        if (e.left.table in node.left.tables and e.right.table in node.right.tables)
                        or (e.right.table in node.left.tables and e.left.table in node.right.tables)}
            if crossing != set(node.condition):
                raise PlanValidationError("join condition does not match the query's crossing edges")

"""The traditional optimizer.

Cardinalities come from :class:`~qsuperopt.catalog.Statistics` under the
usual independence assumptions. The cost model charges each operator the
same work formula the engine counts, evaluated on estimated rows, so with
perfect estimates a plan's cost equals its ``tuples_processed``.

The default search is left-deep and cross-join free. ``bushy`` and
``allow_cross_joins`` widen it; :func:`enumerate_all` is the exhaustive
oracle used to check the DP.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache

from .engine import JOIN_WORK
from .errors import CapacityError, EstimationError, PlanningError
from .plan import (FULL_SCAN, INDEX_LOOKUP, JOIN_ALGORITHMS, NESTED_LOOP, Access,
                   Join, QueryPlan)
from .sqlfront import Param

DEFAULT_RANGE_SELECTIVITY = 1.0 / 3.0
MAX_ENUMERATION_TABLES = 7


@dataclass(frozen=True)
class OptimizerConfig:
    allow_cross_joins: bool = False
    bushy: bool = False


BASELINE = OptimizerConfig()
FULL_SPACE = OptimizerConfig(allow_cross_joins=True, bushy=True)


@dataclass(frozen=True)
class CardEstimate:
    estimated_rows: float


@dataclass(frozen=True)
class CostedPlan:
    plan: QueryPlan
    estimated_cost: float
    estimated_rows: float


# ----------------------------------------------------------------------
# estimation


def filter_selectivity(f, stats) -> float:
    s = stats.get(f.column.table, f.column.column)
    if f.op == "=":
        return 1.0 / max(s.ndv, 1)
    if isinstance(f.value, Param):
        return DEFAULT_RANGE_SELECTIVITY
    v = float(stats.encode_literal(f.column.table, f.column.column, f.value))
    lo, hi = s.min, s.max
    if hi <= lo:
        hit = {"<": lo < v, "<=": lo <= v, ">": lo > v, ">=": lo >= v}[f.op]
        return 1.0 if hit else 0.0
    if f.op in ("<", "<="):
        frac = (v - lo) / (hi - lo)
    else:
        frac = (hi - v) / (hi - lo)
    return min(max(frac, 0.0), 1.0)


def edge_selectivity(edge, stats) -> float:
    a = stats.get(edge.left.table, edge.left.column).ndv
    b = stats.get(edge.right.table, edge.right.column).ndv
    return 1.0 / max(a, b, 1)


def estimate_cardinality(stats, tables, filters=(), joins=()) -> CardEstimate:
    """Rows of a conjunctive query: product of base rows, filter and edge selectivities."""
    rows = 1.0
    for t in tables:
        if t not in stats.row_counts:
            raise EstimationError(f"no statistics for table {t!r}")
        rows *= stats.row_counts[t]
    for f in filters:
        rows *= filter_selectivity(f, stats)
    for e in joins:
        rows *= edge_selectivity(e, stats)
    return CardEstimate(max(rows, 0.0))


class CostModel:
    """Estimated rows and costs for plans of one bound query."""

    def __init__(self, query, stats):
        self.query = query
        self.stats = stats
        self.tables = tuple(sorted(query.tables))
        self.bit = {t: 1 << i for i, t in enumerate(self.tables)}
        self._leaf = {t: estimate_cardinality(stats, [t], query.filters_on(t)).estimated_rows
                      for t in self.tables}
        self._edges = [(self.bit[e.left.table] | self.bit[e.right.table], e,
                        edge_selectivity(e, stats)) for e in query.join_edges]
        self._rows = {}

    def mask(self, tables):
        m = 0
        for t in tables:
            m |= self.bit[t]
        return m

    def rows(self, mask) -> float:
        r = self._rows.get(mask)
        if r is None:
            r = 1.0
            for t, b in self.bit.items():
                if mask & b:
                    r *= self._leaf[t]
            for em, _, sel in self._edges:
                if em & mask == em:
                    r *= sel
            self._rows[mask] = r
        return r

    def crossing(self, lmask, rmask):
        return tuple(e for em, e, _ in self._edges if em & lmask and em & rmask)

    def access_cost(self, node: Access) -> float:
        out = self._leaf[node.table]
        if node.path == FULL_SCAN:
            consumed = float(self.stats.row_counts[node.table])
        else:
            s = self.stats.get(node.table, node.index_column)
            consumed = self.stats.row_counts[node.table] / max(s.ndv, 1)
        return consumed + out

    def join_cost(self, algorithm, lmask, rmask) -> float:
        return float(JOIN_WORK[algorithm](self.rows(lmask), self.rows(rmask), self.rows(lmask | rmask)))

    def plan_cost(self, node) -> float:
        if isinstance(node, Access):
            return self.access_cost(node)
        lm, rm = self.mask(node.left.tables), self.mask(node.right.tables)
        return self.plan_cost(node.left) + self.plan_cost(node.right) + self.join_cost(node.algorithm, lm, rm)

    def costed(self, plan: QueryPlan) -> CostedPlan:
        return CostedPlan(plan, self.plan_cost(plan.root), self.rows(self.mask(plan.tables)))

    def access_variants(self, table):
        """FullScan plus one IndexLookup per indexed equality-filtered column."""
        return _leaf_variants(self.query, self.stats.schema, table)

    def algorithms_for(self, condition):
        return JOIN_ALGORITHMS if condition else (NESTED_LOOP,)


def _submasks(mask):
    sub = (mask - 1) & mask
    while sub:
        yield sub
        sub = (sub - 1) & mask


def _splits(model, mask, config):
    """Ordered (left, right, condition) splits of ``mask`` allowed by ``config``."""
    if config.bushy:
        lefts = list(_submasks(mask))
    else:
        lefts = [mask & ~b for b in model.bit.values() if mask & b and mask & ~b]
    for lm in sorted(lefts):
        rm = mask & ~lm
        cond = model.crossing(lm, rm)
        if not cond and not config.allow_cross_joins:
            continue
        yield lm, rm, cond


def top_k_plans(query, stats, k=1, config: OptimizerConfig = BASELINE):
    """The ``k`` cheapest distinct plans by estimated cost, ascending.

    Ties are broken by canonical serialization. Costs are additive in the
    children, so keeping the k best per table subset is exact.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    model = CostModel(query, stats)
    full = model.mask(model.tables)
    best = {}
    for t in model.tables:
        cands = [(model.access_cost(a), a.canonical, a) for a in model.access_variants(t)]
        best[model.bit[t]] = heapq.nsmallest(k, cands, key=lambda c: (c[0], c[1]))
    for size in range(2, len(model.tables) + 1):
        for mask in range(1, full + 1):
            if mask & ~full or bin(mask).count("1") != size:
                continue
            cands = []
            for lm, rm, cond in _splits(model, mask, config):
                lb, rb = best.get(lm), best.get(rm)
                if not lb or not rb:
                    continue
                for alg in model.algorithms_for(cond):
                    op = model.join_cost(alg, lm, rm)
                    for lc, _, ln in lb:
                        for rc, _, rn in rb:
                            node = Join(alg, cond, ln, rn)
                            cands.append((lc + rc + op, node.canonical, node))
            if cands:
                best[mask] = heapq.nsmallest(k, cands, key=lambda c: (c[0], c[1]))
    if not best.get(full):
        raise PlanningError("no cross-join-free plan exists (join graph is disconnected)")
    rows = model.rows(full)
    return [CostedPlan(QueryPlan(node, i + 1), cost, rows)
            for i, (cost, _, node) in enumerate(best[full])]


def optimize(query, stats, config: OptimizerConfig = BASELINE) -> CostedPlan:
    return top_k_plans(query, stats, 1, config)[0]


# ----------------------------------------------------------------------
# exhaustive enumeration


def _leaf_variants(query, schema, table):
    filters = query.filters_on(table)
    out = [Access(table, FULL_SCAN, None, filters)]
    tdef = schema.table(table)
    for c in sorted({f.column.column for f in filters if f.op == "="}):
        if c in tdef.indexes:
            out.append(Access(table, INDEX_LOOKUP, c, filters))
    return out


def count_plans(query, schema) -> int:
    tables = tuple(sorted(query.tables))
    bit = {t: 1 << i for i, t in enumerate(tables)}
    edges = [bit[e.left.table] | bit[e.right.table] for e in query.join_edges]
    leaf = {bit[t]: len(_leaf_variants(query, schema, t)) for t in tables}

    @lru_cache(maxsize=None)
    def count(mask):
        if mask in leaf:
            return leaf[mask]
        total = 0
        for lm in _submasks(mask):
            rm = mask & ~lm
            crossing = any(em & lm and em & rm for em in edges)
            total += (len(JOIN_ALGORITHMS) if crossing else 1) * count(lm) * count(rm)
        return total

    return count((1 << len(tables)) - 1)


def enumerate_all(query, schema, max_tables=5):
    """Every valid plan (bushy, cross joins, all algorithms and access paths), once.

    Plans come back sorted by canonical form with ``plan_id`` 1..N.
    """
    n = len(query.tables)
    limit = min(max_tables, MAX_ENUMERATION_TABLES)
    if n > limit:
        raise CapacityError(f"{n} tables exceeds enumeration limit {limit}; "
                            f"would generate {count_plans(query, schema)} plans")
    tables = tuple(sorted(query.tables))
    bit = {t: 1 << i for i, t in enumerate(tables)}
    edges = [(bit[e.left.table] | bit[e.right.table], e) for e in query.join_edges]
    memo = {bit[t]: _leaf_variants(query, schema, t) for t in tables}

    def plans(mask):
        got = memo.get(mask)
        if got is not None:
            return got
        out = []
        for lm in _submasks(mask):
            rm = mask & ~lm
            cond = tuple(e for em, e in edges if em & lm and em & rm)
            algs = JOIN_ALGORITHMS if cond else (NESTED_LOOP,)
            lp, rp = plans(lm), plans(rm)
            for alg in algs:
                for a in lp:
                    for b in rp:
                        out.append(Join(alg, cond, a, b))
        memo[mask] = out
        return out

    roots = sorted(plans((1 << n) - 1), key=lambda node: node.canonical)
    return [QueryPlan(r, i + 1) for i, r in enumerate(roots)]


def has_cross_join(plan: QueryPlan) -> bool:
    from .plan import join_nodes

    return any(j.is_cross for j in join_nodes(plan.root))


def log_ratio(estimate, true):
    """|log(estimate / true)| with both sides floored at 1 row."""
    return abs(math.log(max(estimate, 1.0) / max(true, 1.0)))

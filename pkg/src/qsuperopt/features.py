"""Fixed-length plan encodings.

Layout for ``T = max_tables`` (tables take slots in sorted-name order; join
nodes take slots in post-order, trees ordered by their first table slot)::

    [0, 2T)                 access one-hot per table: FullScan, IndexLookup
    [2T, 3T)                log1p(estimated rows) per table after filters
    [3T, 3T + (T-1)(4+T))   per join slot: Hash, SortMerge, NestedLoop
                            one-hot, depth below its tree root, then T
                            entries of +1 (table in left input) / -1 (right)
    next T-1                log1p(estimated rows) per join slot
    last 3                  left-deep fraction, max height, extra trees

Unused slots stay zero. A forest (partial plan) encodes the same way; a
table not yet given an access path has an all-zero access one-hot.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import CapacityError
from .optimizer import edge_selectivity, estimate_cardinality
from .plan import FULL_SCAN, JOIN_ALGORITHMS, Access, Join, QueryPlan, iter_nodes

DEFAULT_MAX_TABLES = 8


def feature_dim(max_tables=DEFAULT_MAX_TABLES):
    T = max_tables
    return 3 * T + (T - 1) * (4 + T) + (T - 1) + 3


def slot_offsets(max_tables=DEFAULT_MAX_TABLES):
    T = max_tables
    join = 3 * T
    join_rows = join + (T - 1) * (4 + T)
    return {"access": 0, "leaf_rows": 2 * T, "join": join, "join_width": 4 + T,
            "join_rows": join_rows, "shape": join_rows + (T - 1)}


class Featurizer:
    """Encodes plans and forests of one query's tables under fixed statistics."""

    def __init__(self, stats, max_tables=DEFAULT_MAX_TABLES):
        self.stats = stats
        self.T = max_tables
        self.dim = feature_dim(max_tables)
        self.off = slot_offsets(max_tables)
        self._leaf_rows = {}

    def leaf_rows(self, table, filters):
        key = (table, filters)
        r = self._leaf_rows.get(key)
        if r is None:
            r = self._leaf_rows[key] = estimate_cardinality(self.stats, [table], filters).estimated_rows
        return r

    def subtree_rows(self, node, cache):
        r = cache.get(id(node))
        if r is None:
            if isinstance(node, Access):
                r = self.leaf_rows(node.table, node.filters)
            elif isinstance(node, Join):
                r = self.subtree_rows(node.left, cache) * self.subtree_rows(node.right, cache)
                for e in node.condition:
                    r *= edge_selectivity(e, self.stats)
            else:  # bare table name inside a forest
                r = self.leaf_rows(node[0], node[1])
            cache[id(node)] = r
        return r

    def __call__(self, item, tables=None):
        """Encode a :class:`QueryPlan`, a plan node, or a forest (list of
        nodes and ``(table, filters)`` pairs for tables without access path)."""
        if isinstance(item, QueryPlan):
            forest = [item.root]
        elif isinstance(item, (Access, Join)):
            forest = [item]
        else:
            forest = list(item)
        if tables is None:
            tables = set()
            for t in forest:
                tables |= _tables_of(t)
        tables = sorted(tables)
        if len(tables) > self.T:
            raise CapacityError(f"{len(tables)} tables exceed featurizer capacity {self.T}")
        slot = {t: i for i, t in enumerate(tables)}
        T, off = self.T, self.off
        v = np.zeros(self.dim)
        cache = {}
        forest = sorted(forest, key=lambda t: min(slot[x] for x in _tables_of(t)))
        j = 0
        joins = 0
        leftdeep = 0
        max_h = 0
        for tree in forest:
            if not isinstance(tree, (Access, Join)):
                s = slot[tree[0]]
                v[off["leaf_rows"] + s] = math.log1p(self.subtree_rows(tree, cache))
                continue
            max_h = max(max_h, _height(tree))
            for node, depth in _post_order_with_depth(tree):
                if isinstance(node, Access):
                    s = slot[node.table]
                    v[off["access"] + 2 * s + (0 if node.path == FULL_SCAN else 1)] = 1.0
                    v[off["leaf_rows"] + s] = math.log1p(self.subtree_rows(node, cache))
                    continue
                base = off["join"] + j * off["join_width"]
                v[base + JOIN_ALGORITHMS.index(node.algorithm)] = 1.0
                v[base + 3] = depth
                for t in node.left.tables:
                    v[base + 4 + slot[t]] = 1.0
                for t in node.right.tables:
                    v[base + 4 + slot[t]] = -1.0
                v[off["join_rows"] + j] = math.log1p(self.subtree_rows(node, cache))
                joins += 1
                leftdeep += isinstance(node.right, Access)
                j += 1
        sh = off["shape"]
        v[sh] = leftdeep / joins if joins else 0.0
        v[sh + 1] = max_h
        v[sh + 2] = len(forest) - 1
        return v

    def many(self, items, tables=None):
        return np.array([self(i, tables) for i in items]).reshape(-1, self.dim)


def _tables_of(t):
    if isinstance(t, (Access, Join)):
        return t.tables
    return frozenset((t[0],))


def _height(node):
    if isinstance(node, Join):
        return 1 + max(_height(node.left), _height(node.right))
    return 0


def _post_order_with_depth(node, depth=0):
    if isinstance(node, Join):
        yield from _post_order_with_depth(node.left, depth + 1)
        yield from _post_order_with_depth(node.right, depth + 1)
    yield node, depth


def construction_states(plan: QueryPlan, query):
    """Forests visited when building ``plan`` bottom-up in post-order.

    Starts with every table bare and ends with the finished plan.
    """
    bare = {t: (t, query.filters_on(t)) for t in query.tables}
    forest = {t: bare[t] for t in query.tables}  # first table -> tree
    states = [list(forest.values())]
    root = plan.root
    if isinstance(root, Access):
        return states + [[root]]
    for node in iter_nodes(root):
        if not isinstance(node, Join):
            continue
        for t in node.tables:
            forest.pop(t, None)
        forest[min(node.tables)] = node
        states.append(list(forest.values()))
    return states

"""Executes physical plans over a :class:`~qsuperopt.catalog.Database`.

Intermediate results are join indexes: one row-id array per base table,
all of equal length. Every operator adds to a deterministic work counter:

* scan / index lookup: rows consumed + rows produced
* hash join: |L| + |R| + output + build side (the smaller input)
* sort-merge join: |L| + |R| + output + n*ceil(log2 n) per input
* nested loop: |L| + |L|*|R| + output
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import WorkLimitExceeded
from .plan import (FULL_SCAN, HASH, NESTED_LOOP, SORT_MERGE, Access, QueryPlan,
                   validate_plan)
from .util import rng_for, sort_work

COST_METRICS = ("tuples", "wall")


@dataclass(frozen=True)
class ExecutionResult:
    answer: int
    tuples_processed: int
    wall_ns: int
    sampled: bool = False
    sample_fraction: float = 1.0


def measured_cost(result: ExecutionResult, metric="tuples") -> float:
    """The value every superoptimizer minimizes."""
    if metric == "tuples":
        return float(result.tuples_processed)
    if metric == "wall":
        return float(result.wall_ns)
    raise ValueError(f"unknown cost metric {metric!r}")


def hash_join_work(nl, nr, nout):
    return nl + nr + nout + min(nl, nr)


def sort_merge_work(nl, nr, nout):
    return nl + nr + nout + sort_work(nl) + sort_work(nr)


def nested_loop_work(nl, nr, nout):
    return nl + nl * nr + nout


JOIN_WORK = {HASH: hash_join_work, SORT_MERGE: sort_merge_work, NESTED_LOOP: nested_loop_work}


class _Run:
    def __init__(self, db, sample_masks, work_limit):
        self.db = db
        self.masks = sample_masks
        self.limit = work_limit
        self.work = 0

    def charge(self, n):
        self.work += int(n)
        if self.limit is not None and self.work > self.limit:
            raise WorkLimitExceeded(self.limit, self.work)

    def precheck(self, n):
        if self.limit is not None and self.work + n > self.limit:
            raise WorkLimitExceeded(self.limit, self.work + int(n))

    def access(self, node: Access):
        t = self.db.table(node.table)
        mask = self.masks.get(node.table) if self.masks else None
        if node.path == FULL_SCAN:
            rows = np.arange(t.row_count) if mask is None else np.flatnonzero(mask)
            rest = node.filters
        else:
            f = node.index_filter()
            rows = self.db.index_lookup(node.table, node.index_column, f.value)
            if mask is not None:
                rows = rows[mask[rows]]
            rest = [g for g in node.filters if g is not f]
        consumed = len(rows)
        for g in rest:
            rows = rows[t.filter_mask(g.column.column, g.op, g.value)[rows]]
        self.charge(consumed + len(rows))
        return {node.table: rows}, len(rows)

    def keys(self, rel, ref):
        return self.db.table(ref.table).column(ref.column)[rel[ref.table]]

    def join(self, node):
        lrel, nl = self.run(node.left)
        rrel, nr = self.run(node.right)
        keys = node.oriented_keys()
        if not keys:
            self.precheck(nested_loop_work(nl, nr, nl * nr))
            li = np.repeat(np.arange(nl), nr)
            ri = np.tile(np.arange(nr), nl)
        else:
            lk, rk = self.keys(lrel, keys[0][0]), self.keys(rrel, keys[0][1])
            if node.algorithm == NESTED_LOOP:
                self.precheck(nl + nl * nr)
                li, ri = _nested_loop(lk, rk)
            elif node.algorithm == HASH:
                li, ri = _hash_join(lk, rk, self)
            else:
                li, ri = _sort_merge(lk, rk, self)
            for lref, rref in keys[1:]:
                keep = self.keys(lrel, lref)[li] == self.keys(rrel, rref)[ri]
                li, ri = li[keep], ri[keep]
        n = len(li)
        self.charge(JOIN_WORK[node.algorithm](nl, nr, n))
        out = {t: r[li] for t, r in lrel.items()}
        out.update({t: r[ri] for t, r in rrel.items()})
        return out, n

    def run(self, node):
        if isinstance(node, Access):
            return self.access(node)
        return self.join(node)


def _expand(lo, hi, order):
    """Pairs (probe index, build row) for per-probe match ranges [lo, hi)."""
    counts = hi - lo
    total = int(counts.sum())
    probe = np.repeat(np.arange(len(lo)), counts)
    starts = np.repeat(lo - (np.cumsum(counts) - counts), counts)
    return probe, order[np.arange(total) + starts]


def _hash_join(lk, rk, run):
    if len(lk) == 0 or len(rk) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    swap = len(lk) < len(rk)  # build on the smaller input
    build, probe = (lk, rk) if swap else (rk, lk)
    uniq, inverse = np.unique(build, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    starts = np.searchsorted(inverse[order], np.arange(len(uniq)))
    ends = np.append(starts[1:], len(build))
    slot = np.searchsorted(uniq, probe)
    slot[slot == len(uniq)] = 0
    hit = uniq[slot] == probe
    lo = np.where(hit, starts[slot], 0)
    hi = np.where(hit, ends[slot], 0)
    run.precheck(int((hi - lo).sum()))
    p, b = _expand(lo, hi, order)
    return (b, p) if swap else (p, b)


def _sort_merge(lk, rk, run):
    lo_order = np.argsort(lk, kind="stable")
    ro_order = np.argsort(rk, kind="stable")
    ls, rs = lk[lo_order], rk[ro_order]
    lo = np.searchsorted(rs, ls, "left")
    hi = np.searchsorted(rs, ls, "right")
    run.precheck(int((hi - lo).sum()))
    p, r = _expand(lo, hi, ro_order)
    return lo_order[p], r


def _nested_loop(lk, rk):
    if lk.dtype == np.int64 and rk.dtype == np.int64:
        return kernels.nested_loop_pairs(np.ascontiguousarray(lk), np.ascontiguousarray(rk))
    return kernels.python_impl.nested_loop_pairs(lk, rk)


def sample_masks(db, fraction, seed):
    """Per-table Bernoulli(fraction) row masks, seeded by (seed, table)."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("sample fraction must be in (0, 1]")
    if fraction == 1.0:
        return None
    return {name: rng_for("sample", int(seed), name).random(t.row_count) < fraction
            for name, t in sorted(db.tables.items())}


def execute(db, plan: QueryPlan, query=None, work_limit=None, _masks=None, _fraction=1.0):
    """Run ``plan`` and return its exact COUNT plus work accounting.

    ``work_limit`` aborts with :class:`WorkLimitExceeded` once the tuple
    counter passes it (used by search loops as an execution timeout).
    """
    validate_plan(plan, db.schema, query)
    run = _Run(db, _masks, work_limit)
    t0 = time.perf_counter_ns()
    _, n = run.run(plan.root)
    wall = time.perf_counter_ns() - t0
    return ExecutionResult(int(n), int(run.work), int(wall), _masks is not None, float(_fraction))


def execute_on_sample(db, plan: QueryPlan, fraction=0.1, seed=0, query=None, work_limit=None):
    masks = sample_masks(db, fraction, seed)
    return execute(db, plan, query, work_limit, _masks=masks, _fraction=fraction)

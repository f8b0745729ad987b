"""Execute the optimizer's k best plans and keep the fastest."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .engine import execute, measured_cost
from .errors import WorkLimitExceeded
from .optimizer import BASELINE, OptimizerConfig, top_k_plans


@dataclass
class TopkResult:
    plan: object
    cost: float
    executed: list = field(default_factory=list)  # (plan, cost, censored)
    status: str = "ok"

    @property
    def baseline_cost(self):
        return self.executed[0][1]


def superoptimize_topk(db, query, stats, k=3, config: OptimizerConfig = BASELINE, metric="tuples",
                       time_budget_s=None, prune=True):
    """Run the ranked plans in order and return the cheapest measured one.

    The first (optimizer) plan always runs to completion. With ``prune``
    and the tuples metric, later plans stop as soon as they exceed the
    incumbent's work; such a plan could not have won, so the answer is the
    same as without pruning. With ``time_budget_s`` plans keep running
    until the budget is spent, never beyond ``k`` plans.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    start = time.perf_counter()
    ranked = top_k_plans(query, stats, k, config)
    best_plan, best_cost = None, float("inf")
    executed = []
    status = "ok"
    for i, cp in enumerate(ranked):
        if i and time_budget_s is not None and time.perf_counter() - start >= time_budget_s:
            status = "time budget exhausted"
            break
        limit = int(best_cost) if prune and metric == "tuples" and i else None
        try:
            cost = measured_cost(execute(db, cp.plan, query, work_limit=limit), metric)
            censored = False
        except WorkLimitExceeded as exc:
            cost, censored = float(exc.work_so_far), True
        executed.append((cp.plan, cost, censored))
        if not censored and cost < best_cost:
            best_plan, best_cost = cp.plan, cost
    return TopkResult(best_plan, best_cost, executed, status)

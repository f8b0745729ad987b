"""Episodic, exploration-tilted plan search verified by execution.

Each episode builds one plan bottom-up. A step either takes a uniformly
random action (probability ``epsilon``) or the action whose resulting
forest the value model predicts cheapest. The value model learns from an
experience store shared across queries; every construction state of an
executed plan is labelled with the cheapest cost seen through it.
"""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import execute, execute_on_sample, measured_cost
from .errors import ConfigError, WorkLimitExceeded
from .features import Featurizer, construction_states
from .nn import Experience, TrainConfig, train_bottleneck
from .optimizer import BASELINE, optimize
from .plan import JOIN_ALGORITHMS, NESTED_LOOP, Access, Join, QueryPlan
from .sqlfront import templatize, to_sql
from .util import stable_seed


class ExperienceStore:
    """In-memory experience list, optionally mirrored to an append-only CSV.

    CSV columns: ``fingerprint, kind, f0..f{F-1}, measured, sampled``.
    Each experience writes a ``plan`` row followed by its ``state`` rows.
    """

    def __init__(self, path=None):
        self.items = []
        self.path = Path(path) if path else None

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def append(self, exp: Experience):
        self.items.append(exp)
        if self.path is None:
            return
        new = not self.path.exists() or self.path.stat().st_size == 0
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["fingerprint", "kind"] + [f"f{i}" for i in range(len(exp.plan_features))]
                           + ["measured", "sampled"])
            tail = [repr(float(exp.measured)), int(exp.sampled)]
            w.writerow([exp.fingerprint, "plan"] + [repr(float(x)) for x in exp.plan_features] + tail)
            for st in (exp.state_features if exp.state_features is not None else ()):
                w.writerow([exp.fingerprint, "state"] + [repr(float(x)) for x in st] + tail)

    @classmethod
    def load(cls, path):
        """Read a store back; later appends go to the same file."""
        store = cls()
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        cur, states = None, []
        for row in rows + [None]:
            if row is None or row[1] == "plan":
                if cur is not None:
                    cur.state_features = np.array(states) if states else None
                    store.items.append(cur)
                if row is None:
                    break
                cur, states = Experience(np.array([float(x) for x in row[2:-2]]), float(row[-2]),
                                         row[0], bool(int(row[-1]))), []
            else:
                states.append([float(x) for x in row[2:-2]])
        store.path = Path(path)
        return store

@dataclass
class ExploreConfig:
    epsilon: float = 0.5
    episodes: int = 24
    select_k: int = 4
    rounds: int = 3
    sample_fraction: float = 0.1
    seed: int = 0
    metric: str = "tuples"
    limit_factor: float = 10.0
    workers: int = 1
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=60))

    def validate(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon", "must be in [0, 1]")
        for name in ("episodes", "select_k"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.rounds < 0:
            raise ConfigError("rounds", "must be >= 0")
        if self.select_k > self.episodes:
            raise ConfigError("select_k", "cannot exceed episodes")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ConfigError("sample_fraction", "must be in (0, 1]")


class ZeroModel:
    """Untrained value model: predicts the same cost for everything."""

    def predict(self, X):
        return np.zeros(len(np.atleast_2d(X)))


# ----------------------------------------------------------------------
# episodes


def _access_variants(query, schema, table):
    from .optimizer import _leaf_variants

    return _leaf_variants(query, schema, table)


def _actions(forest, query, schema):
    """Successor forests, in a fixed order."""
    out = []
    if len(forest) == 1 and not isinstance(forest[0], (Access, Join)):
        return [[a] for a in _access_variants(query, schema, forest[0][0])]
    for i, j in itertools.permutations(range(len(forest)), 2):
        a, b = forest[i], forest[j]
        avs = _access_variants(query, schema, a[0]) if isinstance(a, tuple) else [a]
        bvs = _access_variants(query, schema, b[0]) if isinstance(b, tuple) else [b]
        at, bt = _tables(a), _tables(b)
        cond = tuple(e for e in query.join_edges
                     if (e.left.table in at and e.right.table in bt)
                     or (e.right.table in at and e.left.table in bt))
        rest = [t for k, t in enumerate(forest) if k not in (i, j)]
        for alg in (JOIN_ALGORITHMS if cond else (NESTED_LOOP,)):
            for av in avs:
                for bv in bvs:
                    out.append(rest + [Join(alg, cond, av, bv)])
    return out


def _tables(t):
    return t.tables if isinstance(t, (Access, Join)) else frozenset((t[0],))


def run_episode(query, value_model, epsilon, seed, featurizer: Featurizer, schema) -> QueryPlan:
    """Build one complete plan; the whole bushy, cross-join space is reachable."""
    rng = np.random.default_rng(stable_seed("episode", int(seed)))
    forest = [(t, query.filters_on(t)) for t in sorted(query.tables)]
    while True:
        acts = _actions(forest, query, schema)
        if rng.random() < epsilon:
            forest = acts[int(rng.integers(len(acts)))]
        else:
            X = featurizer.many(acts, query.tables)
            forest = acts[int(np.argmin(value_model.predict(X)))]
        if len(forest) == 1 and isinstance(forest[0], (Access, Join)):
            return QueryPlan(forest[0])


# ----------------------------------------------------------------------
# diverse selection


def select_diverse(candidates, k, value_model, featurize):
    """Greedy max-min selection in feature space.

    The first pick is the best predicted plan; each further pick maximizes
    its smallest Euclidean distance to those already picked. Ties go to
    the lowest ``plan_id``. Duplicates (same canonical plan) count once.
    """
    distinct = {}
    for p in candidates:
        distinct.setdefault(p.canonical, p)
    plans = sorted(distinct.values(), key=lambda p: p.plan_id)
    if k >= len(plans):
        return plans
    X = np.array([featurize(p) for p in plans], dtype=float)
    pred = np.asarray(value_model.predict(X), dtype=float)
    chosen = [int(np.argmin(pred))]  # argmin keeps the first (lowest id) on ties
    mind = np.linalg.norm(X - X[chosen[0]], axis=1)
    while len(chosen) < k:
        mind[chosen] = -np.inf
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, np.linalg.norm(X - X[nxt], axis=1))
    return [plans[i] for i in chosen]


# ----------------------------------------------------------------------
# driver


@dataclass
class ExploreResult:
    plan: QueryPlan
    cost: float
    baseline_plan: QueryPlan
    baseline_cost: float
    report: list
    status: str = "ok"
    value_model: object = None


def make_experience(plan, query, featurizer, measured, sampled, fingerprint=None):
    states = featurizer.many(construction_states(plan, query), query.tables)
    return Experience(states[-1].copy(), float(measured), fingerprint or templatize(to_sql(query)).fingerprint,
                      bool(sampled), states)


def train_value_model(store, n_features, config: TrainConfig):
    if len(store) == 0:
        return ZeroModel()
    return train_bottleneck(store, n_features, include_states=True, config=config)


def superoptimize_explore(db, query, stats, cfg: ExploreConfig, store: ExperienceStore = None,
                          value_model=None, baseline=None):
    """Rounds of episodes, diverse-k selection and sampled execution.

    The optimizer's plan is always executed on full data, so the returned
    plan never costs more than it.
    """
    cfg.validate()
    store = store if store is not None else ExperienceStore()
    featurizer = Featurizer(stats)
    fingerprint = templatize(to_sql(query)).fingerprint
    baseline = baseline or optimize(query, stats, BASELINE).plan
    report = []

    def run_full(plan, limit=None):
        try:
            r = execute(db, plan, query, work_limit=limit)
            return measured_cost(r, cfg.metric), False
        except WorkLimitExceeded as exc:
            return float(exc.limit), True

    base_cost, _ = run_full(baseline)
    report.append({"phase": "baseline", "plan": baseline.canonical, "cost": base_cost,
                   "sampled": False, "censored": False})
    if cfg.rounds == 0:
        return ExploreResult(baseline, base_cost, baseline, base_cost, report,
                             "no superoptimization performed")

    def run_sample(plan, limit):
        try:
            r = execute_on_sample(db, plan, cfg.sample_fraction, cfg.seed, query, work_limit=limit)
            return measured_cost(r, cfg.metric), False
        except WorkLimitExceeded as exc:
            return float(exc.limit), True

    ref, _ = run_sample(baseline, None)
    limit = int(max(ref, 1.0) * cfg.limit_factor) if cfg.metric == "tuples" else None
    model = value_model or train_value_model(store, featurizer.dim, cfg.train)
    sampled_best = (ref, baseline)
    round_best = None
    for r in range(cfg.rounds):
        cands = []
        for e in range(cfg.episodes):
            p = run_episode(query, model, cfg.epsilon, stable_seed(cfg.seed, fingerprint, r, e),
                            featurizer, db.schema)
            cands.append(p.with_id(e + 1))
        picks = select_diverse(cands, cfg.select_k, model, lambda p: featurizer(p, query.tables))
        if cfg.workers > 1:
            with ThreadPoolExecutor(cfg.workers) as pool:
                results = list(pool.map(lambda p: run_sample(p, limit), picks))
        else:
            results = [run_sample(p, limit) for p in picks]
        round_best = None
        for p, (c, censored) in zip(picks, results):
            store.append(make_experience(p, query, featurizer, c, cfg.sample_fraction < 1.0, fingerprint))
            report.append({"phase": f"round{r}", "plan": p.canonical, "cost": c,
                           "sampled": cfg.sample_fraction < 1.0, "censored": censored})
            if round_best is None or c < round_best[0]:
                round_best = (c, p)
            if c < sampled_best[0]:
                sampled_best = (c, p)
        model = train_value_model(store, featurizer.dim, cfg.train)

    best_plan, best_cost = baseline, base_cost
    for p in dict.fromkeys([sampled_best[1], round_best[1]]):
        if p == baseline:
            continue
        c, censored = run_full(p, int(base_cost) if cfg.metric == "tuples" else None)
        report.append({"phase": "verify", "plan": p.canonical, "cost": c, "sampled": False,
                       "censored": censored})
        if not censored and c < best_cost:
            best_plan, best_cost = p, c
    return ExploreResult(best_plan, best_cost, baseline, base_cost, report, "ok", model)

"""Plan search in a learned latent space.

The encoder is the bottleneck half of :class:`~qsuperopt.nn.BottleneckNet`.
The decoder is retrieval: a latent point decodes to the pool plan whose
encoding is nearest. Bayesian optimization proposes offsets ``v`` from the
encoding of the optimizer's plan ``p1`` and executes ``decode(E(p1) + v)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .engine import execute, measured_cost
from .errors import DecodeError, InvariantViolation, WorkLimitExceeded
from .gp import GaussianProcess, median_length_scale
from .plan import QueryPlan
from .util import stable_seed


def encode(net, features):
    return net.encode(features)


def predict(net, features):
    return net.predict(features)


class PlanPool:
    """Distinct candidate plans with cached features and latent points."""

    def __init__(self, plans, featurizer, net=None):
        plans = list(plans)
        if not plans:
            raise DecodeError("empty plan pool")
        canon = [p.canonical for p in plans]
        if len(set(canon)) != len(canon):
            raise InvariantViolation("plan pool contains duplicate plans")
        ids = [p.plan_id for p in plans]
        if len(set(ids)) != len(ids):
            plans = [p.with_id(i + 1) for i, p in enumerate(plans)]
        self.plans = plans
        self.features = featurizer.many(plans)
        if len({f.tobytes() for f in self.features}) != len(plans):
            raise InvariantViolation("featurization collision inside the plan pool")
        self.index = {c: i for i, c in enumerate(canon)}
        self.latents = None
        self._tree = None
        if net is not None:
            self.set_encoder(net)

    def __len__(self):
        return len(self.plans)

    def set_encoder(self, net):
        self.latents = np.asarray(net.encode(self.features))
        # one representative per distinct encoding: the lowest plan_id
        rep = {}
        for i in sorted(range(len(self.plans)), key=lambda i: self.plans[i].plan_id):
            rep.setdefault(self.latents[i].tobytes(), i)
        self._rep = np.array(sorted(rep.values()))
        self._tree = cKDTree(self.latents[self._rep])

    def position(self, plan: QueryPlan):
        i = self.index.get(plan.canonical)
        if i is None:
            raise DecodeError("plan is not in the pool")
        return i

    def distinct_encoding_mask(self):
        keys = [z.tobytes() for z in self.latents]
        counts = {}
        for k in keys:
            counts[k] = counts.get(k, 0) + 1
        return np.array([counts[k] == 1 for k in keys])


def decode(net, pool: PlanPool, z):
    """Nearest pool plan to latent point(s) ``z``; ties go to the lowest plan_id."""
    if pool is None or len(pool) == 0:
        raise DecodeError("cannot decode against an empty pool")
    if pool.latents is None:
        pool.set_encoder(net)
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    _, idx = pool._tree.query(np.atleast_2d(z))
    out = [pool.plans[pool._rep[i]] for i in np.atleast_1d(idx)]
    return out[0] if single else out


@dataclass
class TraceEntry:
    iteration: int
    offset: np.ndarray
    plan: QueryPlan
    measured_cost: float
    incumbent: float
    censored: bool = False


@dataclass
class BayesResult:
    plan: QueryPlan
    cost: float
    trace: list = field(default_factory=list)
    status: str = "ok"
    executions: int = 0


def bayes_superoptimize(db, query, pool: PlanPool, net, budget, seed=0, initial_plan=None,
                        metric="tuples", n_candidates=512, limit_factor=10.0, executor=None):
    """Minimize cost(decode(E(p1) + v)) over offsets v by GP-EI search.

    ``initial_plan`` is p1 (defaults to the first pool plan). ``budget`` is
    the number of executions after p1. Under the ``tuples`` metric a plan
    stops once it has done ``limit_factor`` times the incumbent's work; its
    cost is then recorded as that cap.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if pool.latents is None:
        pool.set_encoder(net)
    run = executor or (lambda plan, limit: execute(db, plan, query, work_limit=limit))
    p1 = initial_plan if initial_plan is not None else pool.plans[0]
    i1 = pool.position(p1)
    z1 = pool.latents[i1]
    rng = np.random.default_rng(stable_seed("bayes", int(seed)))
    lo, hi = pool.latents.min(0), pool.latents.max(0)
    fallback_ls = median_length_scale(pool.latents[rng.permutation(len(pool))[:256]], 1.0)

    def evaluate(plan, incumbent):
        limit = None
        if metric == "tuples" and incumbent is not None and np.isfinite(incumbent):
            limit = int(incumbent * limit_factor)
        try:
            return measured_cost(run(plan, limit), metric), False
        except WorkLimitExceeded as exc:
            return float(exc.limit), True

    c1, _ = evaluate(pool.plans[i1], None)
    seen = {i1}
    Z, y = [z1], [np.log1p(c1)]
    best_i, best_c = i1, c1
    trace = [TraceEntry(0, np.zeros_like(z1), pool.plans[i1], c1, c1)]
    status, stale, it = "ok", 0, 0
    while it < budget:
        gp = GaussianProcess(np.array(Z), np.array(y), fallback_length_scale=fallback_ls)
        ls = gp.length_scale
        half = n_candidates // 2
        top = np.argsort(y, kind="stable")[:3]
        centers = np.array(Z)[top][rng.integers(0, len(top), half)]
        cands = np.vstack([centers + rng.normal(0.0, 0.5 * ls, centers.shape),
                           rng.uniform(lo, hi, (n_candidates - half, len(z1)))])
        decoded = pool._rep[pool._tree.query(cands)[1]]
        fresh = np.array([d not in seen for d in decoded])
        if not fresh.any():
            stale += 1
            if stale >= 3:
                status = "latent space exhausted"
                break
            continue
        stale = 0
        ei = gp.expected_improvement(cands)
        ei[~fresh] = -1.0
        k = int(np.argmax(ei))
        j = int(decoded[k])
        seen.add(j)
        it += 1
        cost, censored = evaluate(pool.plans[j], best_c)
        Z.append(pool.latents[j])
        y.append(np.log1p(cost))
        if cost < best_c:
            best_i, best_c = j, cost
        trace.append(TraceEntry(it, cands[k] - z1, pool.plans[j], cost, best_c, censored))
    return BayesResult(pool.plans[best_i], best_c, trace, status, len(trace))


@dataclass
class LatentConfig:
    budget: int = 20
    seed: int = 0
    n_random: int = 60
    n_top: int = 30
    sample_fraction: float = 0.1
    metric: str = "tuples"
    n_candidates: int = 512
    latent_dim: int = 8
    pool_source: str = "auto"  # "enumerate", "episodes" or "auto"
    pool_size: int = 2000
    max_tables: int = 5


def build_pool_plans(db, query, stats, cfg: LatentConfig):
    """Candidate plans: the whole space for small queries, else top-k plus random episodes."""
    from .optimizer import FULL_SPACE, enumerate_all, top_k_plans

    source = cfg.pool_source
    if source == "auto":
        source = "enumerate" if len(query.tables) <= cfg.max_tables else "episodes"
    if source == "enumerate":
        return enumerate_all(query, db.schema, cfg.max_tables)
    if source != "episodes":
        raise ValueError(f"unknown pool source {cfg.pool_source!r}")
    from .explore import ZeroModel, run_episode
    from .features import Featurizer

    fz = Featurizer(stats)
    plans = {c.plan.canonical: c.plan for c in top_k_plans(query, stats, min(50, cfg.pool_size), FULL_SPACE)}
    zero = ZeroModel()
    attempts = 0
    while len(plans) < cfg.pool_size and attempts < 5 * cfg.pool_size:
        p = run_episode(query, zero, 1.0, stable_seed("pool", cfg.seed, attempts), fz, db.schema)
        plans.setdefault(p.canonical, p)
        attempts += 1
    ordered = sorted(plans.values(), key=lambda p: p.canonical)
    return [p.with_id(i + 1) for i, p in enumerate(ordered)]


def training_experiences(db, query, pool: PlanPool, stats, cfg: LatentConfig, reference=None):
    """Sampled executions used to shape the latent space.

    Mixes ``n_random`` uniformly drawn pool plans with the ``n_top`` best
    estimated plans of both the default and the full search space, so the
    encoder sees the cheap region as well as the bulk of the pool.
    """
    from .engine import execute_on_sample
    from .nn import Experience
    from .optimizer import BASELINE, FULL_SPACE, top_k_plans

    rng = np.random.default_rng(stable_seed("latent-train", int(cfg.seed)))
    pick = set(rng.choice(len(pool), min(cfg.n_random, len(pool)), replace=False).tolist())
    if cfg.n_top:
        for conf in (FULL_SPACE, BASELINE):
            for c in top_k_plans(query, stats, cfg.n_top, conf):
                pick.add(pool.position(c.plan))
    reference = reference or pool.plans[0]
    ref = execute_on_sample(db, reference, cfg.sample_fraction, cfg.seed, query)
    cap = max(int(measured_cost(ref, "tuples")), 1) * 1000
    out = []
    for i in sorted(pick):
        try:
            r = execute_on_sample(db, pool.plans[i], cfg.sample_fraction, cfg.seed, query,
                                  work_limit=cap if cfg.metric == "tuples" else None)
            c = measured_cost(r, cfg.metric)
        except WorkLimitExceeded as exc:
            c = float(exc.limit)
        out.append(Experience(pool.features[i], c, "", cfg.sample_fraction < 1.0))
    return out


def superoptimize_latent(db, query, stats, cfg: LatentConfig = None, initial_plan=None, net=None):
    """Full latent pipeline: pool, encoder training, then Bayesian search from p1."""
    from .features import Featurizer
    from .nn import TrainConfig, train_bottleneck
    from .optimizer import BASELINE, optimize

    cfg = cfg or LatentConfig()
    p1 = initial_plan or optimize(query, stats, BASELINE).plan
    plans = build_pool_plans(db, query, stats, cfg)
    if p1.canonical not in {p.canonical for p in plans}:
        plans = plans + [p1.with_id(len(plans) + 1)]
    pool = PlanPool(plans, Featurizer(stats))
    if net is None:
        exps = training_experiences(db, query, pool, stats, cfg, reference=p1)
        net = train_bottleneck(exps, config=TrainConfig(epochs=200, seed=cfg.seed), latent=cfg.latent_dim)
    pool.set_encoder(net)
    return bayes_superoptimize(db, query, pool, net, cfg.budget, seed=cfg.seed, initial_plan=p1,
                               metric=cfg.metric, n_candidates=cfg.n_candidates)

"""Query superoptimization workbench.

A small columnar engine, a deliberately imperfect cost-based optimizer,
and strategies that spend real executions to beat it: top-k
verification, exploration-driven episodes, and Bayesian search in a
learned latent space. Also a bespoke bitmap engine for the movie
queries and a query-log lifespan analyzer.
"""

from .catalog import (Database, GenConfig, Statistics, generate_movie_db, generate_random_db,
                      load_db, save_db)
from .engine import execute, execute_on_sample, measured_cost
from .optimizer import BASELINE, FULL_SPACE, enumerate_all, optimize, top_k_plans
from .sqlfront import bind, parse, templatize

__version__ = "0.1.0"

__all__ = [
    "Database", "GenConfig", "Statistics", "generate_movie_db", "generate_random_db", "load_db",
    "save_db", "execute", "execute_on_sample", "measured_cost", "BASELINE", "FULL_SPACE",
    "enumerate_all", "optimize", "top_k_plans", "bind", "parse", "templatize", "__version__",
]

"""Shared instance generators for the test modules."""

import numpy as np

from welfare_rank.nonmyopic import AdjustedValueProblem
from welfare_rank.search import ModelParams, VacancyDistribution, gamma_index, solve_value_unemployment


def random_adjusted_problem(rng, score="gamma"):
    """A random pool with a recommender that keeps a share s of it, alpha1 = alpha0."""
    n = int(rng.integers(3, 25))
    a = float(rng.uniform(0.2, 5.0))
    params = ModelParams(r=float(rng.uniform(0.01, 0.1)), q=float(rng.uniform(0.05, 0.3)), u_b=float(rng.normal(0, 0.3)),
                         k=float(rng.uniform(0, 1)), R=float(rng.uniform(0, 1)), sigma=float(rng.uniform(0.3, 2)),
                         alpha0=a, alpha1=a)
    dist = VacancyDistribution(rng.uniform(0.02, 1, n), rng.normal(0.5, 1.5, n), rng.dirichlet(np.ones(n)))
    rV0 = solve_value_unemployment(params, dist)
    scores = gamma_index(dist.p, dist.U, rV0, params) if score == "gamma" else rng.normal(size=n)
    s = float(rng.uniform(0.05, 1.0))
    return AdjustedValueProblem(params, dist, scores, s, rV0)

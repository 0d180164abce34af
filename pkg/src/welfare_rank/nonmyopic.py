"""Forward-looking seekers who re-optimize their reservation value once a
recommender filters what they see."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InputError, NumericError
from .search import (
    ModelParams,
    VacancyDistribution,
    application_probability,
    bisect_decreasing,
    gamma_index,
    reservation_utility,
    safe_damping,
    solve_fixed_point,
    solve_value_unemployment,
    surplus,
    top_share_weights,
    value_with_rs_myopic,
)


@dataclass(frozen=True)
class AdjustedValueProblem:
    params: ModelParams
    dist: VacancyDistribution
    scores: np.ndarray
    s: float
    rV0: float | None = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.shape != self.dist.p.shape:
            raise InputError("one score per atom is required")
        if not 0 < self.s <= 1:
            raise DomainError(f"selection share must lie in (0, 1], got {self.s}")
        object.__setattr__(self, "scores", scores)
        if self.rV0 is None:
            object.__setattr__(self, "rV0", solve_value_unemployment(self.params, self.dist, tol=1e-13))

    @property
    def selected(self) -> np.ndarray:
        return top_share_weights(self.scores, self.dist.weights, self.s)

    def bellman(self, z):
        """Right-hand side of the adjusted fixed point at candidate value z."""
        pr = self.params
        gam = gamma_index(self.dist.p, self.dist.U, z, pr)
        return pr.u_b + pr.alpha1 / pr.rq * float(np.dot(self.selected, gam)) / self.s

    @property
    def rV1_myopic(self) -> float:
        return value_with_rs_myopic(self.params, self.dist, self.scores, self.s, self.rV0)


def solve_adjusted_value(prob: AdjustedValueProblem, tol: float = 1e-10) -> float:
    """rV1^adj by bisection; the right-hand side is decreasing in z."""
    v1m = prob.rV1_myopic
    delta_m = v1m - prob.rV0
    lo = prob.params.u_b
    hi = v1m + abs(delta_m)
    g = lambda z: prob.bellman(z) - z  # noqa: E731
    if g(lo) < 0 or g(hi) > 0:
        raise NumericError(f"adjusted value not bracketed by [{lo}, {hi}]")
    return bisect_decreasing(g, lo, hi, tol=tol * 1e-2)


def solve_adjusted_value_iterative(prob: AdjustedValueProblem, tol: float = 1e-12) -> float:
    """Same fixed point by damped iteration, started from the myopic value."""
    pr = prob.params
    lip = pr.alpha1 / pr.rq * float(np.dot(prob.selected, prob.dist.p)) / prob.s
    z = solve_fixed_point(prob.bellman, prob.rV1_myopic, damping=safe_damping(lip), tol=tol, max_iter=100_000)
    if z is None:
        raise NumericError("damped iteration for the adjusted value did not converge")
    return z


def theta(prob: AdjustedValueProblem, z) -> float:
    """Hiring rate on recommended vacancies when the seeker's value is z."""
    pr = prob.params
    delta = surplus(prob.dist.U, prob.dist.p, z, pr)
    rate = prob.dist.p * application_probability(delta, pr.sigma)
    return float(np.dot(prob.selected, rate)) / prob.s


class DeltaBracket(NamedTuple):
    lower: float
    upper: float
    approx: float


def bracket_delta_adj(delta_m, theta_m, theta_adj, params: ModelParams, alpha: float | None = None) -> DeltaBracket:
    """Bounds on the adjusted value gain from the myopic gain.

    ``alpha`` defaults to alpha0. The mean-value argument behind the bounds uses
    the arrival rate under recommendations, so the bounds are exact when it
    equals alpha0.
    """
    if delta_m < 0:
        raise DomainError("the bracket is stated for a non-negative myopic gain")
    a = params.alpha0 if alpha is None else alpha
    rq = params.rq
    lower = delta_m * rq / (rq + a * theta_m)
    upper = delta_m * rq / (rq + a * theta_adj)
    return DeltaBracket(lower, upper, lower)


def reservation_shift(delta_adj, U0_star_at_p1):
    return U0_star_at_p1 + delta_adj


@dataclass(frozen=True)
class NonMyopicSummary:
    rV0: float
    rV1_myopic: float
    rV1_adjusted: float
    delta_m: float
    delta_adj: float
    theta_m: float
    theta_adj: float
    lower: float
    upper: float
    U0_star_p1: float
    U1_star_p1: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def summarize(prob: AdjustedValueProblem) -> NonMyopicSummary:
    v1m = prob.rV1_myopic
    v1a = solve_adjusted_value(prob)
    dm, da = v1m - prob.rV0, v1a - prob.rV0
    tm, ta = theta(prob, prob.rV0), theta(prob, v1a)
    if dm >= 0:
        lo, hi, _ = bracket_delta_adj(dm, tm, ta, prob.params)
    else:
        lo = hi = float("nan")
    u0 = float(reservation_utility(prob.rV0, 1.0, prob.params))
    return NonMyopicSummary(prob.rV0, v1m, v1a, dm, da, tm, ta, lo, hi, u0, reservation_shift(da, u0))


def shifted_gamma_scan(params: ModelParams, dist: VacancyDistribution, s: float, xs) -> np.ndarray:
    """Diagnostic: rank by Gamma evaluated at rV0 + x and solve the adjusted value.

    Returns an array with columns (x, rV1_adjusted, rV1_myopic). The best x on
    the grid is a heuristic only; no optimality claim is attached.
    """
    rV0 = solve_value_unemployment(params, dist)
    rows = []
    for x in np.asarray(xs, dtype=float):
        score = gamma_index(dist.p, dist.U, rV0 + x, params)
        prob = AdjustedValueProblem(params, dist, score, s, rV0)
        rows.append((x, solve_adjusted_value(prob), prob.rV1_myopic))
    return np.array(rows)

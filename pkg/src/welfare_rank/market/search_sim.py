"""Discrete-time simulation of one seeker's search spell."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..search import ModelParams, VacancyDistribution, reservation_utility
from .population import SEARCH, substream


@dataclass(frozen=True)
class SpellRecords:
    """One entry per simulated spell."""

    value: np.ndarray
    applications: np.ndarray
    rejections: np.ndarray
    hire_period: np.ndarray  # -1 when the horizon ends before a hire
    hired: np.ndarray

    @property
    def mean_value(self) -> float:
        return float(np.mean(self.value))

    def value_se(self) -> float:
        return float(np.std(self.value, ddof=1) / np.sqrt(self.value.size))


def simulate_sequential_search(dist: VacancyDistribution, params: ModelParams, rV0: float, horizon: int,
                               seed: int, n_spells: int = 10_000, dt: float = 0.01, seeker_id: int = 0) -> SpellRecords:
    """Discounted utility of unemployment spells that start at time zero.

    Each period of length dt brings a vacancy with probability min(alpha0 dt, 1).
    The seeker applies when the realized surplus is positive under the
    reservation rule implied by ``rV0``, paying k per application and R per
    rejection. A hire at wage-equivalent w is worth V0 + (w - rV0) / (r + q).
    Spells still open at the horizon are closed at V0, so the estimate is
    unbiased for V0 = rV0 / r up to discretization.
    """
    if horizon < 1:
        raise DomainError("horizon must be at least one period")
    rng = substream(seed, seeker_id, SEARCH)
    V0 = rV0 / params.r
    arrival = min(params.alpha0 * dt, 1.0)
    step_disc = np.exp(-params.r * dt)
    flow = params.u_b * (1 - step_disc) / params.r

    value = np.zeros(n_spells)
    apps = np.zeros(n_spells, dtype=np.int64)
    rejs = np.zeros(n_spells, dtype=np.int64)
    hire_t = np.full(n_spells, -1, dtype=np.int64)
    open_ = np.ones(n_spells, dtype=bool)
    disc = 1.0
    ustar = reservation_utility(rV0, dist.p, params)
    for t in range(horizon):
        value[open_] += disc * flow
        disc *= step_disc
        n_open = int(open_.sum())
        if n_open == 0 or arrival == 0:
            break
        idx = np.flatnonzero(open_)
        arrives = rng.random(n_open) < arrival
        atom = rng.choice(len(dist), size=n_open, p=dist.weights)
        eps = rng.logistic(0.0, params.sigma, n_open)
        w = dist.U[atom] + eps
        apply = arrives & (w - ustar[atom] > 0)
        success = apply & (rng.random(n_open) < dist.p[atom])
        fail = apply & ~success
        value[idx[apply]] -= disc * params.k
        value[idx[fail]] -= disc * params.R
        value[idx[success]] += disc * (V0 + (w[success] - rV0) / params.rq)
        apps[idx[apply]] += 1
        rejs[idx[fail]] += 1
        hire_t[idx[success]] = t
        open_[idx[success]] = False
    value[open_] += disc * V0
    return SpellRecords(value, apps, rejs, hire_t, hire_t >= 0)

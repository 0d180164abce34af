"""Sequential job-search model: surplus, application probability and the
vacancy value index Gamma, plus the value of unemployment with and without a
recommender.

Utility quantities are flow rates (``r * V``). Functions accept scalars or
numpy arrays and broadcast.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .errors import DegenerateSelectionError, DomainError, InputError, NumericError
from .shocks import ShockDistribution

log = logging.getLogger(__name__)

SOFTPLUS_SWITCH = 30.0


@dataclass(frozen=True)
class ModelParams:
    r: float = 0.05
    q: float = 0.15
    u_b: float = 0.0
    k: float = 0.5
    R: float = 0.5
    sigma: float = 1.0
    alpha0: float = 1.0
    alpha1: float = 1.0

    def __post_init__(self):
        checks = {
            "r > 0": self.r > 0,
            "q >= 0": self.q >= 0,
            "k >= 0": self.k >= 0,
            "R >= 0": self.R >= 0,
            "sigma > 0": self.sigma > 0,
            "alpha0 >= 0": self.alpha0 >= 0,
            "alpha1 >= 0": self.alpha1 >= 0,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise DomainError(f"invalid model parameters: {', '.join(bad)}")

    @property
    def rq(self) -> float:
        return self.r + self.q

    @property
    def k_bar(self) -> float:
        return self.rq * self.k

    @property
    def R_bar(self) -> float:
        return self.rq * self.R


@dataclass(frozen=True)
class VacancyLottery:
    p: float
    U: float

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise DomainError(f"hiring probability must lie in (0, 1], got {self.p}")
        if not np.isfinite(self.U):
            raise DomainError("utility must be finite")


@dataclass(frozen=True)
class VacancyDistribution:
    """Finite weighted list of (p, U) atoms."""

    p: np.ndarray
    U: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        U = np.atleast_1d(np.asarray(self.U, dtype=float))
        if p.size == 0:
            raise InputError("a vacancy distribution needs at least one atom")
        if p.shape != U.shape or p.ndim != 1:
            raise InputError("p and U must be one-dimensional arrays of equal length")
        if self.weights is None:
            w = np.full(p.size, 1.0 / p.size)
        else:
            w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.shape != p.shape:
            raise InputError("weights must match the number of atoms")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be non-negative and sum to one")
        if np.any((p <= 0) | (p > 1)) or not np.all(np.isfinite(U)):
            raise DomainError("atoms need p in (0, 1] and finite U")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_lotteries(cls, lotteries: Sequence[VacancyLottery], weights=None):
        return cls(
            np.array([v.p for v in lotteries]),
            np.array([v.U for v in lotteries]),
            weights,
        )

    def __len__(self):
        return self.p.size


def softplus(x):
    """log(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=float)
    big = x > SOFTPLUS_SWITCH
    safe = np.where(big, 0.0, x)
    return np.where(big, x + np.log1p(np.exp(-np.where(big, x, 0.0))), np.log1p(np.exp(safe)))


def _check_p(p):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise DomainError("hiring probability must be positive")
    return p


def reservation_utility(rV0, p, params: ModelParams):
    """Minimum utility that makes a vacancy with hiring probability p worth an application."""
    p = _check_p(p)
    return rV0 - params.R_bar + (params.k_bar + params.R_bar) / p


def surplus(U, p, rV0, params: ModelParams):
    return np.asarray(U, dtype=float) - reservation_utility(rV0, p, params)


def application_probability(delta, sigma):
    if not np.all(np.asarray(sigma) > 0):
        raise DomainError(f"sigma must be positive, got {sigma}")
    return expit(np.asarray(delta, dtype=float) / sigma)


def gamma_closed(p, delta, sigma):
    """Gamma = p * sigma * log(1 + exp(delta / sigma)) for logistic shocks."""
    if not np.all(np.asarray(sigma) > 0):
        raise DomainError(f"sigma must be positive, got {sigma}")
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise DomainError("hiring probability must lie in [0, 1]")
    return p * sigma * softplus(np.asarray(delta, dtype=float) / sigma)


def gamma_numeric(p, delta, sigma, dist: ShockDistribution | None = None, nodes: int = 256):
    """Gamma by quadrature of p * E[(delta + eps) 1{delta + eps > 0}].

    ``dist`` defaults to the logistic family with scale ``sigma``.
    """
    if dist is None:
        dist = ShockDistribution("logistic", sigma)
    return np.asarray(p, dtype=float) * dist.expected_positive_part(delta, nodes)


def gamma_index(p, U, rV0, params: ModelParams):
    """Gamma(p, U) evaluated at a given value of unemployment."""
    return gamma_closed(p, surplus(U, p, rV0, params), params.sigma)


def m_factor(p_a):
    """-log(1 - p_a) / p_a, extended by continuity with m(0) = 1."""
    p_a = np.asarray(p_a, dtype=float)
    if np.any(p_a >= 1):
        raise DomainError("m-factor diverges as the application probability reaches 1")
    if np.any(p_a < 0):
        raise DomainError("application probability must be non-negative")
    safe = np.where(p_a == 0, 0.5, p_a)
    return np.where(p_a == 0, 1.0, -np.log1p(-safe) / safe)


class GammaFactors(NamedTuple):
    """Gamma = p * p_a * m, with ``m`` in utility units (sigma * m_factor)."""

    p: np.ndarray
    p_a: np.ndarray
    m: np.ndarray

    @property
    def p_h(self):
        return self.p * self.p_a

    @property
    def product(self):
        return self.p * self.p_a * self.m


def decompose_gamma(p, delta, sigma) -> GammaFactors:
    p = np.asarray(p, dtype=float) + 0.0
    x = np.asarray(delta, dtype=float) / sigma
    p_a = application_probability(delta, sigma)
    # sigma * softplus(x) / p_a equals sigma * m_factor(p_a) exactly and keeps
    # full precision when p_a is close to one.
    m = sigma * softplus(x) / p_a
    return GammaFactors(p, p_a, m)


def employment_value_gain(w, rV0, params: ModelParams):
    """V_e(w) - V_0 for realized utility w = U + eps."""
    return (np.asarray(w, dtype=float) - rV0) / params.rq


def expected_gamma(z, dist: VacancyDistribution, params: ModelParams, weights=None):
    w = dist.weights if weights is None else weights
    return float(np.dot(w, gamma_index(dist.p, dist.U, z, params)))


def hiring_rate(z, dist: VacancyDistribution, params: ModelParams, weights=None):
    """E[p F(delta / sigma)] under ``weights``; minus the slope of the Bellman map."""
    w = dist.weights if weights is None else weights
    delta = surplus(dist.U, dist.p, z, params)
    return float(np.dot(w, dist.p * application_probability(delta, params.sigma)))


def bisect_decreasing(g, lo, hi, tol=1e-10, max_iter=500):
    """Root of a decreasing function with g(lo) >= 0 >= g(hi)."""
    g_lo, g_hi = g(lo), g(hi)
    if g_lo < 0 or g_hi > 0:
        raise NumericError(
            f"root not bracketed: g({lo})={g_lo}, g({hi})={g_hi}", residual=min(abs(g_lo), abs(g_hi))
        )
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def safe_damping(lipschitz: float, default: float = 0.5) -> float:
    """Largest damping up to ``default`` that keeps the iteration contracting.

    For a decreasing map with slope in [-L, 0] the damped map has slope in
    [1 - d(1 + L), 1 - d], which stays inside (-1, 1) for d < 2 / (1 + L).
    """
    return min(default, 1.0 / (1.0 + lipschitz))


def solve_fixed_point(f, start, damping=0.5, tol=1e-10, max_iter=10_000):
    """Damped iteration z <- (1 - damping) z + damping f(z).

    Returns None when the iteration fails to settle, so callers can fall back
    to bisection.
    """
    z = start
    for _ in range(max_iter):
        z_new = (1 - damping) * z + damping * f(z)
        if not np.isfinite(z_new):
            return None
        if abs(z_new - z) < tol:
            return z_new
        z = z_new
    return None


def solve_value_unemployment(params: ModelParams, dist: VacancyDistribution, tol=1e-10, max_iter=10_000):
    """Fixed point rV0 = u(b) + alpha0 / (r + q) * E[Gamma(p, U; rV0)]."""
    if len(dist) == 0:
        raise InputError("empty vacancy distribution")
    c = params.alpha0 / params.rq

    def T(z):
        return params.u_b + c * expected_gamma(z, dist, params)

    if params.alpha0 == 0:
        return params.u_b
    z = solve_fixed_point(T, params.u_b, damping=safe_damping(c * float(np.dot(dist.weights, dist.p))),
                          tol=tol, max_iter=max_iter)
    if z is not None and abs(T(z) - z) < 10 * tol:
        return z
    log.debug("damped iteration did not settle; falling back to bisection")
    # T is decreasing and T(u_b) >= u_b, so [u_b, T(u_b)] brackets the root.
    hi = T(params.u_b)
    z = bisect_decreasing(lambda s: T(s) - s, params.u_b, hi, tol=tol * 1e-2)
    resid = abs(T(z) - z)
    if resid > 1e3 * tol:
        raise NumericError(f"value of unemployment did not converge (residual {resid:.3g})", residual=resid)
    return z


def solve_value_unemployment_batch(params: ModelParams, p, U, weights=None, tol=1e-10):
    """Row-wise fixed points for a stack of equally sized vacancy pools.

    ``p`` and ``U`` have shape (n_seekers, n_atoms). Uses vectorized bisection,
    which is safe for any alpha0 because the Bellman map is decreasing.
    """
    p = np.asarray(p, dtype=float)
    U = np.asarray(U, dtype=float)
    if weights is None:
        weights = np.full(p.shape, 1.0 / p.shape[1])
    c = params.alpha0 / params.rq

    def g(z):
        gam = gamma_index(p, U, z[:, None], params)
        return params.u_b + c * np.sum(weights * gam, axis=1) - z

    lo = np.full(p.shape[0], params.u_b, dtype=float)
    hi = params.u_b + c * np.sum(weights * gamma_index(p, U, lo[:, None], params), axis=1)
    hi = hi + 1e-12
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        pos = g(mid) >= 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return 0.5 * (lo + hi)


def top_share_weights(scores, weights, s):
    """Probability mass selected by keeping the top ``s`` share by score.

    Atoms are ordered by score, ties by ascending atom index. The boundary atom
    enters fractionally, so the returned weights sum to ``s``.
    """
    if not 0 < s <= 1:
        raise DomainError(f"selection share must lie in (0, 1], got {s}")
    scores = np.asarray(scores, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if scores.shape != weights.shape:
        raise InputError("one score per atom is required")
    order = np.lexsort((np.arange(scores.size), -scores))
    w_sorted = weights[order]
    before = np.concatenate(([0.0], np.cumsum(w_sorted)[:-1]))
    take = np.clip(s - before, 0.0, w_sorted)
    out = np.zeros_like(weights)
    out[order] = take
    if out.sum() <= 0:
        raise DegenerateSelectionError("thresholding selected no probability mass")
    return out


def value_with_rs_myopic(params: ModelParams, dist: VacancyDistribution, scores, s, rV0_baseline):
    """rV1^m = u(b) + alpha1/(r+q) * E[Gamma^m 1{S above its (1-s) quantile}] / s."""
    sel = top_share_weights(scores, dist.weights, s)
    gam = gamma_index(dist.p, dist.U, rV0_baseline, params)
    return params.u_b + params.alpha1 / params.rq * float(np.dot(sel, gam)) / s


class BeliefDecomposition(NamedTuple):
    full: float
    pure: float
    info: float
    v0_subjective: float
    v0_true: float
    v1_myopic: float


def belief_decomposition(subjective: VacancyDistribution, truth: VacancyDistribution, score, s, params: ModelParams):
    """Split the recommender's effect into a pure search effect and an information effect.

    The seeker keeps the reservation value implied by subjective beliefs while the
    recommender draws from the true distribution. ``score`` is one value per atom
    of ``truth``; None ranks by Gamma^m.
    """
    v0_js = solve_value_unemployment(params, subjective)
    v0_true = solve_value_unemployment(params, truth)
    if score is None:
        score = gamma_index(truth.p, truth.U, v0_js, params)
    v1 = value_with_rs_myopic(params, truth, score, s, v0_js)
    return BeliefDecomposition(v1 - v0_js, v1 - v0_true, v0_true - v0_js, v0_js, v0_true, v1)

"""Synthetic seekers and vacancies with known hiring probabilities and utilities.

Utilities and hiring probabilities are driven by two latent indices per pair,
each a bilinear form in seeker and vacancy features plus a vacancy main effect:

    u_lat = (a_i . b_j / sqrt(d) + m_j) / sqrt(2)
    h_lat = rho * u_lat + sqrt(1 - rho^2) * (g_i . e_j / sqrt(d) + n_j) / sqrt(2)
    U = u_mean + u_scale * u_lat + c_i,   logit p = p_mean + p_scale * h_lat

Each seeker draws a private pool of vacancies; everything random about a
seeker comes from its own substream so generation order does not matter.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit, logit
from scipy.stats import norm

from ..errors import ConfigurationError
from ..scorers.criteria import WeightProfile, u_score
from ..search import ModelParams, application_probability, gamma_closed, reservation_utility, softplus

log = logging.getLogger(__name__)

P_MIN = 1e-4
CHUNK = 512

# substream tags
POOL, SIGNAL, SHOCK, ASSIGN, HISTORY, NOISE, SEARCH, SEEKER = range(8)

ALGOS = ("u_rec", "vadore0", "vadore2", "application", "xgboost")
OCCUPATIONS = ("trades", "services", "office", "technical")
SUPPORT = ("light", "guided", "intensive")
LOCATIONS = ("north", "south", "east", "west", "centre")


def substream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, keys)])


@dataclass(frozen=True)
class SignalNoise:
    """Standard deviations of the noise in each algorithm's score."""

    u_rec: float = 0.5
    vadore0: float = 0.5
    vadore2: float = 0.5
    application: float = 0.5
    xgboost: float = 1.0


@dataclass(frozen=True)
class MarketSpec:
    n_seekers: int = 1000
    n_vacancies: int = 500
    pool_size: int = 200
    latent_dim: int = 4
    u_mean: float = 0.0
    u_scale: float = 1.0
    p_mean: float = -1.5
    p_scale: float = 1.0
    rho: float = 0.0
    c_sd: float = 0.0
    params: ModelParams = field(default_factory=ModelParams)
    click_offset: float | None = None
    noise: SignalNoise = field(default_factory=SignalNoise)
    enroll_prob: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_seekers < 1 or self.n_vacancies < 1:
            raise ConfigurationError("seeker and vacancy counts must be at least 1")
        if not 1 <= self.pool_size <= self.n_vacancies:
            raise ConfigurationError("pool size must lie between 1 and the number of vacancies")
        if not -1 <= self.rho <= 1:
            raise ConfigurationError("rho must lie in [-1, 1]")
        if self.latent_dim < 1:
            raise ConfigurationError("latent dimension must be at least 1")
        if not 0 <= self.enroll_prob <= 1:
            raise ConfigurationError("enrollment probability must lie in [0, 1]")
        if self.u_scale == 0 and self.p_scale == 0:
            log.warning("both latent scales are zero; every pair is identical")

    @property
    def click(self) -> float:
        return 2.0 * self.params.sigma if self.click_offset is None else self.click_offset


@dataclass
class Market:
    spec: MarketSpec
    seekers: pd.DataFrame
    vacancies: pd.DataFrame
    seeker_latent: dict[str, np.ndarray]
    vacancy_latent: dict[str, np.ndarray]
    pools: np.ndarray
    rV0: np.ndarray
    p_clipped: int = 0

    @property
    def n_seekers(self) -> int:
        return self.pools.shape[0]

    def latents(self, rows: np.ndarray, cols: np.ndarray):
        """(u_lat, h_lat) for seekers ``rows`` (n,) against vacancy indices ``cols`` (n, P)."""
        d = self.spec.latent_dim
        sl, vl = self.seeker_latent, self.vacancy_latent
        a, g = sl["a"][rows], sl["g"][rows]
        u = (np.einsum("nd,npd->np", a, vl["b"][cols]) / np.sqrt(d) + vl["m"][cols]) / np.sqrt(2)
        hp = (np.einsum("nd,npd->np", g, vl["e"][cols]) / np.sqrt(d) + vl["n"][cols]) / np.sqrt(2)
        rho = self.spec.rho
        return u, rho * u + np.sqrt(1 - rho**2) * hp

    def truth(self, rows: np.ndarray, cols: np.ndarray | None = None):
        """True (p, U) on the given pairs; defaults to the seekers' pools."""
        rows = np.asarray(rows)
        cols = self.pools[rows] if cols is None else cols
        u_lat, h_lat = self.latents(rows, cols)
        s = self.spec
        p = np.clip(expit(s.p_mean + s.p_scale * h_lat), P_MIN, 1 - P_MIN)
        U = s.u_mean + s.u_scale * u_lat + self.seekers["c_i"].to_numpy()[rows, None]
        return p, U, u_lat

    def seeker_features(self) -> np.ndarray:
        """Observable seeker features for the learned scorer: [a, 1 | g, 1]."""
        sl = self.seeker_latent
        one = np.ones((self.n_seekers, 1))
        return np.hstack([sl["a"], one, sl["g"], one])

    def vacancy_features(self) -> np.ndarray:
        """[b / sqrt(d), m | e / sqrt(d), n] so that the latents are bilinear in the features."""
        vl, d = self.vacancy_latent, self.spec.latent_dim
        return np.hstack([vl["b"] / np.sqrt(d), vl["m"][:, None], vl["e"] / np.sqrt(d), vl["n"][:, None]])

    @property
    def feature_blocks(self) -> list[tuple[int, int]]:
        d = self.spec.latent_dim
        return [(d + 1, d + 1), (d + 1, d + 1)]


def _solve_rV0_rows(p: np.ndarray, U: np.ndarray, params: ModelParams, tol: float = 1e-12) -> np.ndarray:
    """Row-wise value of unemployment with uniform pool weights.

    Each row stops independently, so a row's answer never depends on which
    other rows share the batch.
    """
    c = params.alpha0 / params.rq

    def rhs(z):
        return params.u_b + c * np.mean(gamma_closed(p, U - reservation_utility(z[:, None], p, params), params.sigma), axis=1)

    lo = np.full(p.shape[0], params.u_b)
    hi = rhs(lo)
    active = hi - lo > tol
    while active.any():
        mid = 0.5 * (lo + hi)
        pos = rhs(mid) >= mid
        lo = np.where(active & pos, mid, lo)
        hi = np.where(active & ~pos, mid, hi)
        active = hi - lo > tol
    return 0.5 * (lo + hi)


def sample_market(spec: MarketSpec, threads: int = 1) -> Market:
    d = spec.latent_dim
    vr = substream(spec.seed, 1_000_000_007)
    vacancy_latent = {
        "b": vr.standard_normal((spec.n_vacancies, d)),
        "m": vr.standard_normal(spec.n_vacancies),
        "e": vr.standard_normal((spec.n_vacancies, d)),
        "n": vr.standard_normal(spec.n_vacancies),
    }
    a = np.empty((spec.n_seekers, d))
    g = np.empty((spec.n_seekers, d))
    pools = np.empty((spec.n_seekers, spec.pool_size), dtype=np.int64)
    cols = {k: np.empty(spec.n_seekers) for k in ("x1", "x2", "c_i", "enrolled")}
    strata = {k: np.empty(spec.n_seekers, dtype=np.int64) for k in ("occupation", "support", "location")}
    for i in range(spec.n_seekers):
        rng = substream(spec.seed, i, SEEKER)
        a[i] = rng.standard_normal(d)
        g[i] = rng.standard_normal(d)
        cols["x1"][i], cols["x2"][i] = rng.standard_normal(2)
        cols["c_i"][i] = spec.c_sd * rng.standard_normal()
        cols["enrolled"][i] = rng.random() < spec.enroll_prob
        strata["occupation"][i] = rng.integers(len(OCCUPATIONS))
        strata["support"][i] = rng.integers(len(SUPPORT))
        strata["location"][i] = rng.integers(len(LOCATIONS))
        pools[i] = np.sort(substream(spec.seed, i, POOL).choice(spec.n_vacancies, spec.pool_size, replace=False))

    seekers = pd.DataFrame({
        "seeker_id": np.arange(spec.n_seekers),
        "occupation": np.array(OCCUPATIONS)[strata["occupation"]],
        "support": np.array(SUPPORT)[strata["support"]],
        "location": np.array(LOCATIONS)[strata["location"]],
        "x1": cols["x1"],
        "x2": cols["x2"],
        "c_i": cols["c_i"],
        "enrolled": cols["enrolled"].astype(np.int64),
    })
    vacancies = pd.DataFrame({"vacancy_id": np.arange(spec.n_vacancies)})
    for k in range(d):
        vacancies[f"b{k}"] = vacancy_latent["b"][:, k]
    vacancies["m"] = vacancy_latent["m"]
    for k in range(d):
        vacancies[f"e{k}"] = vacancy_latent["e"][:, k]
    vacancies["n"] = vacancy_latent["n"]

    market = Market(spec, seekers, vacancies, {"a": a, "g": g}, vacancy_latent, pools, np.empty(spec.n_seekers))

    chunks = [np.arange(s, min(s + CHUNK, spec.n_seekers)) for s in range(0, spec.n_seekers, CHUNK)]

    def solve(rows):
        p, U, _ = market.truth(rows)
        raw = expit(spec.p_mean + spec.p_scale * market.latents(rows, pools[rows])[1])
        clipped = int(np.sum((raw < P_MIN) | (raw > 1 - P_MIN)))
        return _solve_rV0_rows(p, U, spec.params), clipped

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        results = list(ex.map(solve, chunks))
    market.rV0 = np.concatenate([r for r, _ in results])
    market.p_clipped = sum(c for _, c in results)
    market.seekers["true_rV0"] = market.rV0
    return market


@dataclass
class PoolFrame:
    """Dense per-pair arrays for a block of seekers, shape (n, pool_size)."""

    rows: np.ndarray
    vacancy_id: np.ndarray
    p: np.ndarray
    U: np.ndarray
    delta: np.ndarray
    p_a: np.ndarray
    gamma: np.ndarray
    scores: dict[str, np.ndarray]
    eps: np.ndarray | None = None

    def to_frame(self) -> pd.DataFrame:
        n, P = self.p.shape
        out = {
            "seeker_id": np.repeat(self.rows, P),
            "vacancy_id": self.vacancy_id.ravel(),
        }
        for k, v in self.scores.items():
            out[f"score_{k}"] = v.ravel()
        out.update(true_p=self.p.ravel(), true_U=self.U.ravel(), true_pa=self.p_a.ravel(), true_gamma=self.gamma.ravel())
        return pd.DataFrame(out)


def consistencies(u_lat: np.ndarray, rng: np.random.Generator, noise: float, n_criteria: int) -> np.ndarray:
    """Per-criterion consistency in [0, 1] as a noisy probit of the utility latent."""
    z = u_lat[..., None] + noise * rng.standard_normal(u_lat.shape + (n_criteria,))
    return norm.cdf(z)


def pool_frame(market: Market, rows, weights: WeightProfile | None = None, with_shocks: bool = True,
               learned=None) -> PoolFrame:
    """True quantities and every algorithm's score over the pools of ``rows``.

    ``learned`` is an optional (BilinearScorer, CalibrationCoefficients) pair;
    when given, the hiring score comes from the trained scorer on a logit scale
    instead of the synthetic noisy signal.
    """
    rows = np.asarray(rows)
    spec, pr = market.spec, market.spec.params
    w = weights or WeightProfile()
    p, U, u_lat = market.truth(rows)
    rV0 = market.rV0[rows, None]
    delta = U - reservation_utility(rV0, p, pr)
    p_a = application_probability(delta, pr.sigma)
    gamma = gamma_closed(p, delta, pr.sigma)
    # log(p * p_a) computed stably from the surplus
    log_ph = np.log(p) - softplus(-delta / pr.sigma)
    n, P = p.shape
    nz = spec.noise
    keys = ("u_rec", "vadore0", "vadore2", "application", "xgboost")
    scores = {k: np.empty((n, P)) for k in keys}
    eps = np.empty((n, P)) if with_shocks else None
    if learned is not None:
        scorer, calib = learned
        S = scorer.score_matrix(market.seeker_features()[rows], market.vacancy_features())
        learned_index = calib.intercept + calib.slope * np.take_along_axis(S, market.pools[rows], axis=1)
    for r, i in enumerate(rows):
        rng = substream(spec.seed, i, SIGNAL)
        c = consistencies(u_lat[r], rng, nz.u_rec, len(w))
        scores["u_rec"][r] = u_score(c, w)
        z = rng.standard_normal((4, P))
        scores["vadore0"][r] = logit(p[r]) + nz.vadore0 * z[0]
        scores["vadore2"][r] = log_ph[r] + nz.vadore2 * z[1]
        scores["application"][r] = np.clip(delta[r] / pr.sigma, -700, 700) + nz.application * z[2]
        scores["xgboost"][r] = logit(p[r]) + nz.xgboost * z[3]
        if learned is not None:
            scores["vadore0"][r] = learned_index[r]
        if with_shocks:
            eps[r] = substream(spec.seed, i, SHOCK).logistic(0.0, pr.sigma, P)
    return PoolFrame(rows, market.pools[rows], p, U, delta, p_a, gamma, scores, eps)

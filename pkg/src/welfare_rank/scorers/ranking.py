"""Top-k selection, MIX hybrids, the Gamma-optimal score and recall@k."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import expit

from ..errors import DomainError, InputError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationCoefficients:
    """Maps a raw score S to a probability expit(a + b * S)."""

    intercept: float
    slope: float

    def __post_init__(self):
        if not (math.isfinite(self.intercept) and math.isfinite(self.slope)):
            raise DomainError("calibration coefficients must be finite")

    @property
    def slope_sign(self) -> int:
        return int(np.sign(self.slope))


def apply_calibration(S, coeff: CalibrationCoefficients):
    return expit(coeff.intercept + coeff.slope * np.asarray(S, dtype=float))


@dataclass(frozen=True)
class RankedList:
    seeker_id: int | None
    vacancy_ids: np.ndarray
    scores: np.ndarray
    short: bool = False

    @property
    def ranks(self) -> np.ndarray:
        return np.arange(1, self.vacancy_ids.size + 1)

    def __len__(self):
        return self.vacancy_ids.size


def order_by_score(vacancy_ids, scores) -> np.ndarray:
    """Permutation sorting by descending score, ties by ascending id."""
    return np.lexsort((np.asarray(vacancy_ids), -np.asarray(scores, dtype=float)))


def ranks_from_scores(vacancy_ids, scores) -> np.ndarray:
    """Rank (1 = best) of each entry under the descending-score order."""
    order = order_by_score(vacancy_ids, scores)
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks


def rank_top_k(vacancy_ids, scores, k: int, seeker_id=None) -> RankedList:
    if k < 1:
        raise DomainError("k must be at least 1")
    ids = np.asarray(vacancy_ids)
    scores = np.asarray(scores, dtype=float)
    if ids.size == 0:
        raise InputError("nothing to rank")
    if ids.shape != scores.shape:
        raise InputError("one score per vacancy is required")
    order = order_by_score(ids, scores)[:k]
    return RankedList(seeker_id, ids[order], scores[order], short=ids.size < k)


@dataclass(frozen=True)
class ConsiderationCutoffs:
    top: int = 25
    mid: int = 50
    wide: int = 100


def consideration_set(vacancy_ids, u_ranks, p_ranks, cutoffs: ConsiderationCutoffs = ConsiderationCutoffs()):
    """Top-top U, top-top P, and cross intersections of mid and wide cutoffs.

    Returns (sorted ids, small_pool flag). The flag is set when the pool is
    smaller than the smallest cutoff, in which case the whole pool is returned.
    """
    ids = np.asarray(vacancy_ids)
    ru, rp = np.asarray(u_ranks), np.asarray(p_ranks)
    if not (ids.shape == ru.shape == rp.shape):
        raise InputError("rankings must cover the same pool")
    small = ids.size < cutoffs.top
    if small:
        log.warning("pool of %d vacancies is within the smallest cutoff; keeping it whole", ids.size)
    c = cutoffs
    keep = (
        (ru <= c.top)
        | (rp <= c.top)
        | ((ru <= c.mid) & (rp <= c.wide))
        | ((ru <= c.wide) & (rp <= c.mid))
    )
    return np.sort(ids[keep]), small


def mix_rank(cs_ids, fraction: float, p_scores, u_scores, n_preselect: int = 15, available=None,
             seeker_id=None) -> RankedList:
    """Filter the consideration set by P, then rank the survivors by U.

    Keeps the max(n_preselect, ceil(fraction * L)) best by P, re-ranks them by U
    and returns the first n_preselect, skipping vacancies flagged unavailable.
    Callers display the head of the returned list.
    """
    ids = np.asarray(cs_ids)
    if ids.size == 0:
        raise InputError("empty consideration set")
    if not 0 < fraction <= 1:
        raise DomainError("fraction must lie in (0, 1]")
    p_scores = np.asarray(p_scores, dtype=float)
    u_scores = np.asarray(u_scores, dtype=float)
    L = ids.size
    n_keep = min(L, max(n_preselect, math.ceil(fraction * L - 1e-12)))
    kept = order_by_score(ids, p_scores)[:n_keep]
    by_u = kept[order_by_score(ids[kept], u_scores[kept])]
    if available is not None:
        by_u = by_u[np.asarray(available, dtype=bool)[by_u]]
    by_u = by_u[:n_preselect]
    return RankedList(seeker_id, ids[by_u], u_scores[by_u], short=by_u.size < n_preselect)


def gamma_score(p_hat, pa_hat):
    """p * (-log(1 - p_a)); the logistic welfare index up to the shock scale."""
    p_hat = np.asarray(p_hat, dtype=float)
    pa_hat = np.asarray(pa_hat, dtype=float)
    if np.any(pa_hat >= 1):
        raise DomainError("application probability of one gives an unbounded score")
    if np.any(pa_hat < 0):
        raise DomainError("application probability must be non-negative")
    return p_hat * -np.log1p(-pa_hat)


def gamma_rank(vacancy_ids, p_hat, pa_hat, k: int, seeker_id=None) -> RankedList:
    return rank_top_k(vacancy_ids, gamma_score(p_hat, pa_hat), k, seeker_id)


@dataclass(frozen=True)
class RecallResult:
    value: float
    n_seekers: int
    excluded: int


def recall_at_k(ranked: Mapping[int, np.ndarray], matches: Mapping[int, int], k: int) -> RecallResult:
    """Share of matched seekers whose realized match is within their top k.

    ``ranked[i]`` lists the whole pool in rank order. Seekers whose match is
    missing from the pool are excluded and counted.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    hits, n, excluded = 0, 0, 0
    for seeker, match in matches.items():
        order = np.asarray(ranked.get(seeker, ()))
        where = np.flatnonzero(order == match)
        if where.size == 0:
            excluded += 1
            continue
        n += 1
        hits += int(where[0] < k)
    if excluded:
        log.info("recall@%d: %d seekers excluded (match outside pool)", k, excluded)
    return RecallResult(hits / n if n else float("nan"), n, excluded)


def recall_curve(match_ranks, ks) -> np.ndarray:
    """Recall at each k from the 1-based rank of every seeker's match."""
    r = np.asarray(match_ranks)
    return np.array([np.mean(r <= k) for k in ks])


def match_ranks_from_scores(score_matrix, match_cols) -> np.ndarray:
    """1-based rank of the matched column in each row (ties by column index)."""
    S = np.asarray(score_matrix, dtype=float)
    cols = np.asarray(match_cols)
    s_match = S[np.arange(S.shape[0]), cols][:, None]
    idx = np.arange(S.shape[1])[None, :]
    better = (S > s_match) | ((S == s_match) & (idx < cols[:, None]))
    return better.sum(axis=1) + 1


@dataclass(frozen=True)
class RankDivergence:
    """u_rank_of_p_top[i]: U-rank of seeker i's best vacancy by P, and vice versa."""

    u_rank_of_p_top: np.ndarray
    p_rank_of_u_top: np.ndarray

    def summary(self) -> dict[str, float]:
        return {
            "median_u_rank_of_p_top": float(np.median(self.u_rank_of_p_top)),
            "median_p_rank_of_u_top": float(np.median(self.p_rank_of_u_top)),
            "mean_u_rank_of_p_top": float(np.mean(self.u_rank_of_p_top)),
            "mean_p_rank_of_u_top": float(np.mean(self.p_rank_of_u_top)),
        }


def rank_divergence(u_scores, p_scores) -> RankDivergence:
    """Cross-ranks of each seeker's top vacancy under two score matrices (seekers x pool)."""
    U = np.asarray(u_scores, dtype=float)
    P = np.asarray(p_scores, dtype=float)
    if U.shape != P.shape:
        raise InputError("score matrices must share a shape")
    top_u = np.array([order_by_score(np.arange(U.shape[1]), row)[0] for row in U])
    top_p = np.array([order_by_score(np.arange(P.shape[1]), row)[0] for row in P])
    return RankDivergence(match_ranks_from_scores(U, top_p), match_ranks_from_scores(P, top_u))

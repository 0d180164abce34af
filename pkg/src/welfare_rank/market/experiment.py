"""Randomized recommendation experiment on a synthetic market."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit

from ..errors import ConfigurationError, InputError
from ..scorers.ranking import ConsiderationCutoffs, consideration_set, mix_rank, order_by_score, ranks_from_scores
from .population import ALGOS, CHUNK, Market, PoolFrame, pool_frame, substream

log = logging.getLogger(__name__)

EXPERIMENT = 11
ORACLE_ARMS = ("gamma_true",)


def parse_arm(name: str) -> tuple[str, str | None, float | None]:
    """'vadore2' -> ('vadore2', None, None); 'mix:vadore2:0.5' -> ('mix', 'vadore2', 0.5)."""
    if name in ALGOS or name in ORACLE_ARMS:
        return name, None, None
    parts = name.split(":")
    if len(parts) == 3 and parts[0] == "mix" and parts[1] in ALGOS:
        try:
            f = float(parts[2])
        except ValueError:
            f = -1.0
        if 0 < f <= 1:
            return "mix", parts[1], f
    raise ConfigurationError(
        f"unknown arm {name!r}; expected one of {ALGOS + ORACLE_ARMS} or 'mix:<algo>:<fraction>'"
    )


@dataclass(frozen=True)
class ExperimentDesign:
    arms: tuple[str, ...] = ("u_rec", "vadore0", "vadore2", "mix:vadore2:0.5", "application", "xgboost")
    shares: tuple[float, ...] | None = None
    strata: tuple[str, ...] = ("occupation", "support", "location")
    list_length: int = 10
    n_preselect: int = 15
    dropout: float = 0.0
    cutoffs: ConsiderationCutoffs = field(default_factory=ConsiderationCutoffs)

    def __post_init__(self):
        if not self.arms:
            raise ConfigurationError("at least one arm is required")
        if len(set(self.arms)) != len(self.arms):
            raise ConfigurationError("arm names must be unique")
        for a in self.arms:
            parse_arm(a)
        shares = self.shares or tuple(1.0 / len(self.arms) for _ in self.arms)
        if len(shares) != len(self.arms) or any(s < 0 for s in shares) or abs(sum(shares) - 1) > 1e-9:
            raise ConfigurationError("arm shares must be non-negative, one per arm, and sum to one")
        object.__setattr__(self, "shares", tuple(float(s) for s in shares))
        if self.list_length < 1 or self.n_preselect < self.list_length:
            raise ConfigurationError("need 1 <= list_length <= n_preselect")
        if not 0 <= self.dropout < 1:
            raise ConfigurationError("dropout must lie in [0, 1)")


def assign_treatments(seekers: pd.DataFrame, design: ExperimentDesign, seed: int) -> pd.DataFrame:
    """Balanced block randomization within strata.

    In each stratum arm counts equal floor(share * n) plus at most one of the
    leftover units, which go to randomly chosen arms weighted by their
    fractional remainders.
    """
    missing = [c for c in design.strata if c not in seekers.columns]
    if missing:
        raise InputError(f"seeker table lacks strata columns {missing}")
    key = seekers[list(design.strata)].astype(str).agg("|".join, axis=1) if design.strata else pd.Series("all", index=seekers.index)
    shares = np.array(design.shares)
    arm_of = np.empty(len(seekers), dtype=object)
    key_arr = key.to_numpy()
    for n_stratum, label in enumerate(sorted(set(key_arr))):
        idx = np.flatnonzero(key_arr == label)
        n = idx.size
        if n == 0:
            log.info("stratum %s is empty; skipped", label)
            continue
        rng = substream(seed, n_stratum, 7_919)
        base = np.floor(shares * n).astype(int)
        left = n - base.sum()
        if left:
            frac = shares * n - base
            extra = rng.choice(len(shares), size=left, replace=False, p=frac / frac.sum())
            base[extra] += 1
        labels = np.repeat(np.arange(len(shares)), base)
        arm_of[idx] = np.array(design.arms, dtype=object)[rng.permutation(labels)]
    out = pd.DataFrame({"seeker_id": seekers["seeker_id"].to_numpy(), "arm": arm_of.astype(str), "stratum": key.to_numpy()})
    for a in design.arms:
        out[f"T_{a}"] = (out["arm"] == a).astype(np.int64)
    return out


def arm_list(arm: str, pf: PoolFrame, r: int, design: ExperimentDesign, available: np.ndarray) -> np.ndarray:
    """Pool column indices shown to seeker row ``r``, in slot order."""
    kind, base, frac = parse_arm(arm)
    ids = pf.vacancy_id[r]
    k = design.list_length
    if kind == "gamma_true":
        return order_by_score(ids, pf.gamma[r])[:k]
    if kind != "mix":
        return order_by_score(ids, pf.scores[kind][r])[:k]
    u, p = pf.scores["u_rec"][r], pf.scores[base][r]
    cs, _ = consideration_set(ids, ranks_from_scores(ids, u), ranks_from_scores(ids, p), design.cutoffs)
    pos = np.searchsorted(ids, cs)
    ranked = mix_rank(cs, frac, p[pos], u[pos], design.n_preselect, available[pos])
    return np.searchsorted(ids, ranked.vacancy_ids)[:k]


LOG_COLUMNS = (
    "seeker_id", "arm", "vacancy_id", "slot", "u_score", "p_score",
    "score_u_rec", "score_vadore0", "score_vadore2", "score_application", "score_xgboost",
    "clicked", "applied", "hired", "true_p", "true_U", "true_pa", "true_gamma", "short_list",
)


def _run_chunk(market: Market, rows: np.ndarray, arms: np.ndarray, design: ExperimentDesign, seed: int, learned):
    pf = pool_frame(market, rows, learned=learned)
    spec = market.spec
    parts: dict[str, list] = {c: [] for c in LOG_COLUMNS}
    for r, (i, arm) in enumerate(zip(rows, arms)):
        rng = substream(seed, i, EXPERIMENT)
        P = pf.p.shape[1]
        u_hire = rng.random(P)
        available = rng.random(P) >= design.dropout
        cols = arm_list(arm, pf, r, design, available)
        latent = pf.delta[r, cols] + pf.eps[r, cols]
        applied = latent > 0
        clicked = latent + spec.click > 0
        hired = applied & (u_hire[cols] < pf.p[r, cols])
        rec = {
            "seeker_id": np.full(cols.size, i),
            "arm": np.full(cols.size, arm, dtype=object),
            "vacancy_id": pf.vacancy_id[r, cols],
            "slot": np.arange(1, cols.size + 1),
            "u_score": pf.scores["u_rec"][r, cols],
            "p_score": expit(pf.scores["vadore0"][r, cols]),
        }
        for a in ALGOS:
            rec[f"score_{a}"] = pf.scores[a][r, cols]
        rec.update(
            clicked=clicked.astype(np.int64),
            applied=applied.astype(np.int64),
            hired=hired.astype(np.int64),
            true_p=pf.p[r, cols],
            true_U=pf.U[r, cols],
            true_pa=pf.p_a[r, cols],
            true_gamma=pf.gamma[r, cols],
            short_list=np.full(cols.size, int(cols.size < design.list_length)),
        )
        for c in LOG_COLUMNS:
            parts[c].append(rec[c])
    frame = pd.DataFrame({c: np.concatenate(v) if v else [] for c, v in parts.items()})
    frame["arm"] = frame["arm"].astype(str)
    return frame, pf


def run_experiment(market: Market, assignment: pd.DataFrame, design: ExperimentDesign, seed: int | None = None,
                   threads: int = 1, learned=None, return_pool: bool = False, enrolled_only: bool = True):
    """Interaction log for the assigned seekers (and optionally their full pool table).

    Shocks are tied to (seeker, vacancy) so every arm faces the same draws;
    hires and availability use the ``seed`` substreams.
    """
    seed = market.spec.seed if seed is None else seed
    table = assignment[["seeker_id", "arm"]].copy()
    unknown = set(table["arm"]) - set(design.arms)
    if unknown:
        raise InputError(f"assignment uses arms missing from the design: {sorted(unknown)}")
    if enrolled_only:
        enrolled = market.seekers.set_index("seeker_id").loc[table["seeker_id"], "enrolled"].to_numpy().astype(bool)
        table = table[enrolled]
    table = table.sort_values("seeker_id", kind="stable")
    rows, arms = table["seeker_id"].to_numpy(), table["arm"].to_numpy()
    chunks = [(rows[s : s + CHUNK], arms[s : s + CHUNK]) for s in range(0, rows.size, CHUNK)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        results = list(ex.map(lambda c: _run_chunk(market, c[0], c[1], design, seed, learned), chunks))
    frames = [f for f, _ in results]
    log_df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=list(LOG_COLUMNS))
    if not return_pool:
        return log_df
    pool = pd.concat([pf.to_frame() for _, pf in results], ignore_index=True) if results else pd.DataFrame()
    return log_df, pool

"""Split-sample comparison of recommendation arms against the estimated Gamma-optimal list.

Step 1 fits hire-given-application, step 2 the application probability, both
as logits in standardized algorithm scores plus slot controls. Step 3 combines
them into Gamma-hat = p_hat * (-log(1 - pa_hat)) (shock scale normalized to one),
step 4 picks each seeker's ten best pool vacancies by Gamma-hat, and step 5
repeats everything over random halvings of the seekers, reporting medians of
estimates and of confidence bounds.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import expit

from .errors import DegenerateFitError, DomainError, InputError, NumericError, SeparationError
from .estimation.linear import FitResult
from .estimation.logit import fit_logit
from .scorers.ranking import gamma_score

log = logging.getLogger(__name__)

SCORE_COLUMNS = ("score_vadore0", "score_vadore2", "score_application", "score_u_rec")
METRICS = ("p", "p_a", "p_h", "gamma", "gamma_gap")
OPTIMAL_ARM = "gamma_opt"
MIN_ROWS = 30


@dataclass(frozen=True)
class Standardizer:
    columns: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, df: pd.DataFrame, columns: Sequence[str]) -> "Standardizer":
        X = df[list(columns)].to_numpy(dtype=float)
        sd = X.std(axis=0)
        return cls(tuple(columns), X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def transform(self, df: pd.DataFrame) -> np.ndarray:
        return (df[list(self.columns)].to_numpy(dtype=float) - self.mean) / self.sd

    def to_dict(self) -> dict:
        return {c: {"mean": float(m), "sd": float(s)} for c, m, s in zip(self.columns, self.mean, self.sd)}


@dataclass
class ProbabilityModel:
    """Logit in standardized scores and slot dummies.

    Predictions hold the slot dummies at their estimation-sample means, so pool
    vacancies that were never displayed get a slot-neutral probability.
    """

    fit: FitResult | None
    scaler: Standardizer
    slot_levels: tuple[int, ...]
    slot_means: np.ndarray
    constant: float | None = None
    notes: list[str] = field(default_factory=list)

    def predict(self, df: pd.DataFrame, slot_neutral: bool = True) -> np.ndarray:
        if self.constant is not None:
            return np.full(len(df), self.constant)
        S = self.scaler.transform(df)
        if slot_neutral or not self.slot_levels:
            D = np.broadcast_to(self.slot_means, (len(df), len(self.slot_levels)))
        else:
            slot = df["slot"].to_numpy()
            D = np.column_stack([(slot == lv).astype(float) for lv in self.slot_levels])
        X = np.hstack([np.ones((len(df), 1)), S, D])
        return expit(X @ self.fit.coef)


def _fit_probability(df: pd.DataFrame, outcome: str, score_cols: Sequence[str], slot_controls: bool,
                     cluster: str = "seeker_id") -> ProbabilityModel:
    y = df[outcome].to_numpy(dtype=float)
    scaler = Standardizer.fit(df, score_cols)
    if y.min() == y.max():
        return ProbabilityModel(None, scaler, (), np.empty(0), constant=float(y.mean()),
                                notes=["constant outcome: intercept-only model"])
    notes = []
    levels: list[int] = []
    if slot_controls and "slot" in df.columns:
        slot = df["slot"].to_numpy()
        for lv in sorted(set(slot.tolist()))[1:]:
            m = slot == lv
            if y[m].min() == y[m].max():
                notes.append(f"slot {lv}: no outcome variation, merged into the baseline")
                continue
            levels.append(lv)
        D = np.column_stack([(slot == lv).astype(float) for lv in levels]) if levels else np.empty((len(df), 0))
    else:
        D = np.empty((len(df), 0))
    X = np.hstack([np.ones((len(df), 1)), scaler.transform(df), D])
    names = ["const", *score_cols, *[f"slot_{lv}" for lv in levels]]
    fit = fit_logit(y, X, names, df[cluster].to_numpy())
    return ProbabilityModel(fit, scaler, tuple(levels), D.mean(axis=0) if levels else np.empty(0), notes=notes)


def fit_hire_given_apply(log_df: pd.DataFrame, score_cols: Sequence[str] = SCORE_COLUMNS,
                         slot_controls: bool = True) -> ProbabilityModel:
    """Step 1: hire on the applied rows."""
    applied = log_df[log_df["applied"] == 1]
    if len(applied) < MIN_ROWS:
        raise DegenerateFitError(f"only {len(applied)} applied rows; need at least {MIN_ROWS}")
    if applied["hired"].sum() == 0:
        raise DegenerateFitError("no hires among applications")
    return _fit_probability(applied, "hired", score_cols, slot_controls)


def fit_apply(log_df: pd.DataFrame, score_cols: Sequence[str] = SCORE_COLUMNS,
              slot_controls: bool = True) -> ProbabilityModel:
    """Step 2: application on all displayed rows."""
    if log_df["applied"].sum() < MIN_ROWS:
        raise DegenerateFitError(f"only {int(log_df['applied'].sum())} applications; need at least {MIN_ROWS}")
    return _fit_probability(log_df, "applied", score_cols, slot_controls)


def gamma_hat(p_hat, pa_hat, sigma: float = 1.0):
    """p * (-log(1 - p_a)), optionally rescaled by an estimated shock scale."""
    return sigma * gamma_score(p_hat, pa_hat)


@dataclass
class OptimalSets:
    seeker_id: np.ndarray  # (G,)
    vacancy_ids: np.ndarray  # (G, k), -1 padded
    gamma_star: np.ndarray  # (G, k), descending, nan padded
    p: np.ndarray
    p_a: np.ndarray
    short: np.ndarray  # (G,) bool

    def to_frame(self) -> pd.DataFrame:
        G, k = self.vacancy_ids.shape
        df = pd.DataFrame({
            "seeker_id": np.repeat(self.seeker_id, k),
            "rank": np.tile(np.arange(1, k + 1), G),
            "vacancy_id": self.vacancy_ids.ravel(),
            "gamma_star": self.gamma_star.ravel(),
            "p_hat": self.p.ravel(),
            "pa_hat": self.p_a.ravel(),
        })
        return df[df["vacancy_id"] >= 0].reset_index(drop=True)


def optimal_set(seeker_ids, vacancy_ids, p_hat, pa_hat, k: int = 10, sigma: float = 1.0) -> OptimalSets:
    """Each seeker's k pool vacancies with the highest Gamma-hat (ties by vacancy id)."""
    seeker_ids = np.asarray(seeker_ids)
    vacancy_ids = np.asarray(vacancy_ids)
    p_hat, pa_hat = np.asarray(p_hat, float), np.asarray(pa_hat, float)
    g = gamma_hat(p_hat, pa_hat, sigma)
    order = np.lexsort((vacancy_ids, -g, seeker_ids))
    s_sorted = seeker_ids[order]
    uniq, start, counts = np.unique(s_sorted, return_index=True, return_counts=True)
    pos = np.arange(order.size) - np.repeat(start, counts)
    take = pos < k
    G = uniq.size
    rows = np.repeat(np.arange(G), counts)[take]
    cols = pos[take]
    vid = np.full((G, k), -1, dtype=np.int64)
    gs, pp, pa = (np.full((G, k), np.nan) for _ in range(3))
    sel = order[take]
    vid[rows, cols] = vacancy_ids[sel]
    gs[rows, cols] = g[sel]
    pp[rows, cols] = p_hat[sel]
    pa[rows, cols] = pa_hat[sel]
    return OptimalSets(uniq, vid, gs, pp, pa, counts < k)


def gamma_gap(seeker_ids, gamma_displayed, opt: OptimalSets) -> np.ndarray:
    """Per displayed row: Gamma-hat* of the same within-seeker rank minus Gamma-hat.

    Displayed rows are ranked by Gamma-hat within seeker; the j-th one is paired
    with the j-th best vacancy of the seeker's optimal set. Since displayed
    vacancies belong to the pool, every gap is non-negative.
    """
    seeker_ids = np.asarray(seeker_ids)
    gd = np.asarray(gamma_displayed, dtype=float)
    order = np.lexsort((-gd, seeker_ids))
    s_sorted = seeker_ids[order]
    uniq, start, counts = np.unique(s_sorted, return_index=True, return_counts=True)
    pos = np.arange(order.size) - np.repeat(start, counts)
    row_of = np.searchsorted(opt.seeker_id, s_sorted)
    if np.any(opt.seeker_id[np.minimum(row_of, opt.seeker_id.size - 1)] != s_sorted):
        raise InputError("a displayed seeker has no pool")
    k = opt.gamma_star.shape[1]
    if pos.max(initial=0) >= k:
        raise InputError("displayed lists are longer than the optimal sets")
    out = np.empty(gd.size)
    out[order] = opt.gamma_star[row_of, pos] - gd[order]
    return out


@dataclass(frozen=True)
class SplitSpec:
    n_splits: int = 50
    fraction: float = 0.5
    bootstrap: int = 1000
    seed: int = 0
    levels: tuple[float, ...] = (0.95, 0.99)
    max_redraws: int = 100

    def __post_init__(self):
        if self.n_splits < 1:
            raise DomainError("need at least one split")
        if not 0 < self.fraction < 1:
            raise DomainError("split fraction must lie in (0, 1)")


def split_halves(seeker_ids, seed: int, split: int, fraction: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """(estimation seekers S1, evaluation seekers S2) for split number ``split``."""
    ids = np.unique(np.asarray(seeker_ids))
    rng = np.random.default_rng([seed, split, 55])
    perm = rng.permutation(ids.size)
    n1 = int(round(fraction * ids.size))
    return np.sort(ids[perm[:n1]]), np.sort(ids[perm[n1:]])


def _cluster_mean_ci(x: np.ndarray, codes: np.ndarray, G: int, levels) -> tuple[float, dict]:
    n = x.size
    m = float(x.mean())
    tot = np.bincount(codes, weights=x - m, minlength=G)
    se = float(np.sqrt(G / max(G - 1, 1) * np.sum(tot**2)) / n)
    cis = {lv: (m - stats.norm.ppf(0.5 + lv / 2) * se, m + stats.norm.ppf(0.5 + lv / 2) * se) for lv in levels}
    return m, cis


def _bootstrap_mean_ci(x: np.ndarray, codes: np.ndarray, G: int, levels, reps: int, rng) -> tuple[float, dict]:
    m = float(x.mean())
    tot = np.bincount(codes, weights=x, minlength=G)
    cnt = np.bincount(codes, minlength=G).astype(float)
    pick = rng.integers(G, size=(reps, G))
    draws = tot[pick].sum(axis=1) / cnt[pick].sum(axis=1)
    cis = {lv: (float(np.quantile(draws, 0.5 - lv / 2)), float(np.quantile(draws, 0.5 + lv / 2))) for lv in levels}
    return m, cis


@dataclass
class SplitResult:
    split: int
    rows: list[dict]
    hire_model: ProbabilityModel
    apply_model: ProbabilityModel
    zero_application_arms: list[str]


def evaluate_split(log_df: pd.DataFrame, pool: pd.DataFrame, s1: np.ndarray, s2: np.ndarray, split: int,
                   spec: SplitSpec, score_cols=SCORE_COLUMNS, slot_controls: bool = True,
                   k: int = 10, sigma: float = 1.0) -> SplitResult:
    in1 = np.isin(log_df["seeker_id"].to_numpy(), s1)
    est = log_df[in1]
    hire_m = fit_hire_given_apply(est, score_cols, slot_controls)
    apply_m = fit_apply(est, score_cols, slot_controls)

    ev = log_df[~in1 & np.isin(log_df["seeker_id"].to_numpy(), s2)]
    pv = pool[np.isin(pool["seeker_id"].to_numpy(), s2)]
    p_d, pa_d = hire_m.predict(ev), apply_m.predict(ev)
    g_d = gamma_hat(p_d, pa_d, sigma)
    opt = optimal_set(pv["seeker_id"].to_numpy(), pv["vacancy_id"].to_numpy(), hire_m.predict(pv),
                      apply_m.predict(pv), k, sigma)
    gap = gamma_gap(ev["seeker_id"].to_numpy(), g_d, opt)

    rng = np.random.default_rng([spec.seed, split, 99])
    rows, zero_arms = [], []
    arms = ev["arm"].to_numpy()
    seekers = ev["seeker_id"].to_numpy()
    applied = ev["applied"].to_numpy()
    metric_vals = {"p": p_d, "p_a": pa_d, "p_h": p_d * pa_d, "gamma": g_d, "gamma_gap": gap}
    for arm in sorted(set(arms.tolist())):
        m = arms == arm
        codes, uniq = pd.factorize(seekers[m], sort=True)
        G = uniq.size
        zero = applied[m].sum() == 0
        if zero:
            zero_arms.append(arm)
        for metric, vals in metric_vals.items():
            x = vals[m]
            if zero:
                est_, cis = 0.0, {lv: (0.0, 0.0) for lv in spec.levels}
            elif metric == "gamma_gap" and spec.bootstrap:
                est_, cis = _bootstrap_mean_ci(x, codes, G, spec.levels, spec.bootstrap, rng)
            else:
                est_, cis = _cluster_mean_ci(x, codes, G, spec.levels)
            rows.append(_row(split, arm, metric, est_, cis, zero))
    # the optimal pseudo-arm over every evaluation seeker
    valid = ~np.isnan(opt.gamma_star)
    codes = np.repeat(np.arange(opt.seeker_id.size), valid.sum(1))
    G = opt.seeker_id.size
    p_o, pa_o, g_o = opt.p[valid], opt.p_a[valid], opt.gamma_star[valid]
    for metric, x in {"p": p_o, "p_a": pa_o, "p_h": p_o * pa_o, "gamma": g_o, "gamma_gap": g_o - g_o}.items():
        est_, cis = _cluster_mean_ci(x, codes, G, spec.levels)
        rows.append(_row(split, OPTIMAL_ARM, metric, est_, cis, False))
    return SplitResult(split, rows, hire_m, apply_m, zero_arms)


def _row(split, arm, metric, est, cis, flag):
    r = {"split": split, "arm": arm, "metric": metric, "estimate": est, "zero_applications": flag}
    for lv, (lo, hi) in cis.items():
        tag = int(round(lv * 100))
        r[f"ci{tag}_low"], r[f"ci{tag}_high"] = lo, hi
    return r


@dataclass
class WelfareEstimates:
    summary: pd.DataFrame  # arm, metric, estimate, ci bounds (medians across splits)
    per_split: pd.DataFrame
    counterfactual: pd.DataFrame  # seeker_id, rank, vacancy_id, gamma_star, ...
    discarded_splits: int
    notes: list[str] = field(default_factory=list)

    def arm_comparison(self, level: float = 0.95) -> pd.DataFrame:
        tag = int(round(level * 100))
        out = self.summary[["arm", "metric", "estimate", f"ci{tag}_low", f"ci{tag}_high"]]
        return out.rename(columns={f"ci{tag}_low": "ci_low", f"ci{tag}_high": "ci_high"}).reset_index(drop=True)

    def value(self, arm: str, metric: str, column: str = "estimate") -> float:
        m = (self.summary["arm"] == arm) & (self.summary["metric"] == metric)
        return float(self.summary.loc[m, column].iloc[0])


def evaluate_arms(log_df: pd.DataFrame, pool: pd.DataFrame, spec: SplitSpec = SplitSpec(),
                  score_cols: Sequence[str] = SCORE_COLUMNS, slot_controls: bool = True, k: int = 10,
                  threads: int = 1, sigma: float = 1.0) -> WelfareEstimates:
    """Steps 1-5 over ``spec.n_splits`` halvings of the seekers.

    ``sigma`` rescales Gamma-hat, e.g. by an estimated shock scale; the default
    keeps the unit normalization.
    """
    need = {"seeker_id", "arm", "applied", "hired", *score_cols}
    missing = need - set(log_df.columns)
    if missing:
        raise InputError(f"log lacks columns {sorted(missing)}")
    if missing := set(score_cols) - set(pool.columns):
        raise InputError(f"pool lacks score columns {sorted(missing)}")
    arms = set(log_df["arm"])
    seekers = log_df["seeker_id"].unique()
    arm_of = log_df.drop_duplicates("seeker_id").set_index("seeker_id")["arm"]

    # pick split draws first so the work below can run in any order
    draws, discarded, attempt = [], 0, 0
    while len(draws) < spec.n_splits:
        if attempt >= spec.n_splits + spec.max_redraws:
            raise NumericError(f"could not draw {spec.n_splits} valid splits; {discarded} discarded")
        s1, s2 = split_halves(seekers, spec.seed, attempt, spec.fraction)
        attempt += 1
        if set(arm_of.loc[s2]) != arms or set(arm_of.loc[s1]) != arms:
            discarded += 1
            continue
        draws.append((attempt - 1, s1, s2))

    def work(d):
        idx, s1, s2 = d
        try:
            return evaluate_split(log_df, pool, s1, s2, idx, spec, score_cols, slot_controls, k, sigma)
        except (DegenerateFitError, SeparationError) as exc:
            log.warning("split %d discarded: %s", idx, exc)
            return None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        results = list(ex.map(work, draws))
    ok = [r for r in results if r is not None]
    discarded += len(results) - len(ok)
    if not ok:
        raise DegenerateFitError("every split failed to fit")
    per_split = pd.DataFrame([row for r in ok for row in r.rows])
    value_cols = [c for c in per_split.columns if c == "estimate" or c.startswith("ci")]
    summary = per_split.groupby(["arm", "metric"], sort=True)[value_cols].median().reset_index()
    summary["n_splits"] = len(ok)
    metric_order = {m: i for i, m in enumerate(METRICS)}
    summary = summary.sort_values(["arm", "metric"], key=lambda s: s.map(metric_order) if s.name == "metric" else s)
    summary = summary.reset_index(drop=True)

    notes = [f"{discarded} split draws discarded"]
    zero = sum(len(r.zero_application_arms) for r in ok)
    if zero:
        notes.append(f"{zero} (split, arm) cells without applications reported as zero")

    # descriptive counterfactual lists from a full-sample fit
    try:
        hire_m = fit_hire_given_apply(log_df, score_cols, slot_controls)
        apply_m = fit_apply(log_df, score_cols, slot_controls)
        opt = optimal_set(pool["seeker_id"].to_numpy(), pool["vacancy_id"].to_numpy(),
                          hire_m.predict(pool), apply_m.predict(pool), k, sigma)
        counterfactual = opt.to_frame()
    except (DegenerateFitError, SeparationError) as exc:
        notes.append(f"full-sample counterfactual lists unavailable: {exc}")
        counterfactual = pd.DataFrame(columns=["seeker_id", "rank", "vacancy_id", "gamma_star", "p_hat", "pa_hat"])
    return WelfareEstimates(summary, per_split, counterfactual, discarded, notes)


def true_arm_means(log_df: pd.DataFrame, sigma: float = 1.0) -> pd.DataFrame:
    """Per-arm means of the true p, p_a, p_h and Gamma / sigma on displayed rows."""
    df = log_df.assign(true_ph=log_df["true_p"] * log_df["true_pa"], true_gamma_unit=log_df["true_gamma"] / sigma)
    return df.groupby("arm")[["true_p", "true_pa", "true_ph", "true_gamma_unit"]].mean()

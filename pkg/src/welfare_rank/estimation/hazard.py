"""Discrete-time hazard calibration of a raw matching score into a hiring probability.

Each application is a risk-set row until the seeker's first hire. The hire
probability on a row is expit(alpha_rank + beta * S), where alpha_rank are
optional application-order effects (and, in two-sided mode, vacancy-side order
effects) with the first level pinned to zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import pandas as pd

from ..errors import ConfigurationError, InputError
from ..scorers.ranking import CalibrationCoefficients
from .linear import FitResult
from .logit import fit_logit

log = logging.getLogger(__name__)

Mode = Literal["none", "application", "two_sided"]
MODES = ("none", "application", "two_sided")


@dataclass
class HazardFit:
    mode: str
    fit: FitResult
    beta: float
    alpha_seeker: dict[int, float]
    alpha_vacancy: dict[int, float]
    loglik: float
    aic: float
    notes: list[str] = field(default_factory=list)

    @property
    def calibration(self) -> CalibrationCoefficients:
        return CalibrationCoefficients(self.fit["const"], self.beta)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "beta": self.beta,
            "beta_se": self.fit.se_of("score"),
            "intercept": self.fit["const"],
            "alpha_seeker": {str(k): v for k, v in self.alpha_seeker.items()},
            "alpha_vacancy": {str(k): v for k, v in self.alpha_vacancy.items()},
            "loglik": self.loglik,
            "aic": self.aic,
            "notes": self.notes,
        }


def risk_set(apps: pd.DataFrame, seeker="seeker_id", order="order", outcome="hired") -> pd.DataFrame:
    """Rows up to and including each seeker's first hire, in chronological order."""
    df = apps.sort_values([seeker, order], kind="stable")
    prior_hires = df.groupby(seeker)[outcome].cumsum() - df[outcome]
    return df[prior_hires == 0].reset_index(drop=True)


def _rank_dummies(ranks: np.ndarray, y: np.ndarray, prefix: str, max_rank: int, notes: list[str]):
    r = np.minimum(ranks, max_rank)
    cols, names, levels = [], [], []
    for lv in range(2, max_rank + 1):
        m = r == lv
        if not m.any():
            notes.append(f"{prefix} rank {lv}: no observations, dummy dropped")
            continue
        if y[m].min() == y[m].max():
            notes.append(f"{prefix} rank {lv}: no outcome variation, merged into the baseline")
            continue
        cols.append(m.astype(float))
        names.append(f"{prefix}{lv}")
        levels.append(lv)
    return cols, names, levels


def fit_hazard_calibration(apps: pd.DataFrame, mode: Mode = "none", score="score", outcome="hired",
                           seeker="seeker_id", order="order", vacancy_order="vacancy_order",
                           max_rank: int = 10, truncate: bool = True) -> HazardFit:
    if mode not in MODES:
        raise ConfigurationError(f"unknown rank mode {mode!r}; expected one of {MODES}")
    missing = [c for c in (score, outcome, seeker, order) if c not in apps.columns]
    if mode == "two_sided" and vacancy_order not in apps.columns:
        missing.append(vacancy_order)
    if missing:
        raise InputError(f"application table lacks columns {missing}")
    df = risk_set(apps, seeker, order, outcome) if truncate else apps.reset_index(drop=True)
    y = df[outcome].to_numpy(dtype=float)
    cols = [np.ones(len(df)), df[score].to_numpy(dtype=float)]
    names = ["const", "score"]
    notes: list[str] = []
    seeker_levels: list[int] = []
    vac_levels: list[int] = []
    if mode in ("application", "two_sided"):
        c, n, seeker_levels = _rank_dummies(df[order].to_numpy(), y, "app_rank_", max_rank, notes)
        cols += c
        names += n
    if mode == "two_sided":
        c, n, vac_levels = _rank_dummies(df[vacancy_order].to_numpy(), y, "vac_rank_", max_rank, notes)
        cols += c
        names += n
    for note in notes:
        log.info(note)
    fit = fit_logit(y, np.column_stack(cols), names, df[seeker].to_numpy())
    alpha_s = {1: 0.0, **{lv: fit[f"app_rank_{lv}"] for lv in seeker_levels}}
    alpha_v = {1: 0.0, **{lv: fit[f"vac_rank_{lv}"] for lv in vac_levels}} if mode == "two_sided" else {}
    return HazardFit(mode, fit, fit["score"], alpha_s, alpha_v, fit.loglik, fit.AIC, notes)


def simulate_hazard_panel(n_seekers: int, apps_per_seeker: int, intercept: float, slope: float, seed: int,
                          score_mean: float = 17.0, score_sd: float = 15.0, rank_effects=None) -> pd.DataFrame:
    """Application sequences with hires drawn from a planted hazard.

    ``rank_effects[r - 1]`` shifts the index of the r-th application.
    Sequences stop at the first hire.
    """
    rng = np.random.default_rng([seed, 31337])
    S = rng.normal(score_mean, score_sd, (n_seekers, apps_per_seeker))
    eta = intercept + slope * S
    if rank_effects is not None:
        eff = np.zeros(apps_per_seeker)
        eff[: len(rank_effects)] = rank_effects
        eta = eta + eff[None, :]
    hired = rng.random(S.shape) < 1 / (1 + np.exp(-eta))
    df = pd.DataFrame({
        "seeker_id": np.repeat(np.arange(n_seekers), apps_per_seeker),
        "order": np.tile(np.arange(1, apps_per_seeker + 1), n_seekers),
        "score": S.ravel(),
        "hired": hired.ravel().astype(np.int64),
    })
    return risk_set(df)

"""Tabular data behind the standard figures; plotting is left to the reader's tool."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .errors import UsageError
from .io import write_csv
from .scorers.ranking import rank_divergence
from .search import gamma_closed
from .shocks import FAMILIES, ShockDistribution

FIGURES = ("m-curves", "gamma-surface", "arm-comparison", "rank-divergence")


def m_curves(n: int = 200, lo: float = 0.001, hi: float = 0.95, unit_variance: bool = False) -> pd.DataFrame:
    """Expected surplus given application against the application probability.

    By default every family has the variance of the unit-scale logistic, so the
    logistic curve is exactly -log(1 - p_a) / p_a.
    """
    grid = np.linspace(lo, hi, n)
    out = {"p_a": grid}
    for fam in FAMILIES:
        out[f"m_{fam}"] = ShockDistribution(fam, 1.0, unit_variance).conditional_surplus(grid)
    return pd.DataFrame(out)


def gamma_surface(p_grid=None, delta_grid=None, sigma: float = 1.0) -> pd.DataFrame:
    p_grid = np.linspace(0.01, 1.0, 50) if p_grid is None else np.asarray(p_grid, float)
    delta_grid = np.linspace(-5.0, 5.0, 51) if delta_grid is None else np.asarray(delta_grid, float)
    P, D = np.meshgrid(p_grid, delta_grid, indexing="ij")
    return pd.DataFrame({"p": P.ravel(), "delta": D.ravel(), "gamma": gamma_closed(P, D, sigma).ravel()})


def arm_comparison(estimates, level: float = 0.95) -> pd.DataFrame:
    return estimates.arm_comparison(level)


def rank_divergence_frame(u_scores, p_scores, seeker_ids=None) -> pd.DataFrame:
    rd = rank_divergence(u_scores, p_scores)
    ids = np.arange(rd.u_rank_of_p_top.size) if seeker_ids is None else np.asarray(seeker_ids)
    return pd.DataFrame({"seeker_id": ids, "u_rank_of_p_top": rd.u_rank_of_p_top,
                         "p_rank_of_u_top": rd.p_rank_of_u_top})


def emit_figure_data(which: str, path: Path | None = None, **inputs) -> pd.DataFrame:
    """Build one figure's table and optionally write it as CSV."""
    if which == "m-curves":
        df = m_curves(**inputs)
    elif which == "gamma-surface":
        df = gamma_surface(**inputs)
    elif which == "arm-comparison":
        df = arm_comparison(**inputs)
    elif which == "rank-divergence":
        df = rank_divergence_frame(**inputs)
    else:
        raise UsageError(f"unknown figure {which!r}; expected one of {FIGURES}")
    if path is not None:
        write_csv(Path(path), df)
    return df

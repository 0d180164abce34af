"""Pre-experiment application histories used to train and calibrate the hiring score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .population import CHUNK, HISTORY, Market, pool_frame, substream


@dataclass(frozen=True)
class HistorySample:
    applications: pd.DataFrame  # seeker_id, vacancy_id, order, hired, true_p
    positives: pd.DataFrame  # seeker_id, vacancy_id of the first hire


def sample_history(market: Market, seekers=None, max_apps: int = 20, seed: int | None = None) -> HistorySample:
    """Application sequences ending at the first hire or after ``max_apps`` tries.

    Seekers apply to pool vacancies drawn without replacement with probability
    proportional to their application probability; each application succeeds
    with the true hiring probability.
    """
    seed = market.spec.seed if seed is None else seed
    rows = np.arange(market.n_seekers) if seekers is None else np.asarray(seekers)
    recs = {k: [] for k in ("seeker_id", "vacancy_id", "order", "hired", "true_p")}
    for s in range(0, rows.size, CHUNK):
        block = rows[s : s + CHUNK]
        pf = pool_frame(market, block, with_shocks=False)
        for r, i in enumerate(block):
            rng = substream(seed, i, HISTORY)
            w = pf.p_a[r] / pf.p_a[r].sum()
            n = min(max_apps, int(np.count_nonzero(w)))
            cols = rng.choice(w.size, size=n, replace=False, p=w)
            hired = rng.random(n) < pf.p[r, cols]
            stop = int(np.argmax(hired)) + 1 if hired.any() else n
            recs["seeker_id"].append(np.full(stop, i))
            recs["vacancy_id"].append(pf.vacancy_id[r, cols[:stop]])
            recs["order"].append(np.arange(1, stop + 1))
            recs["hired"].append(hired[:stop].astype(np.int64))
            recs["true_p"].append(pf.p[r, cols[:stop]])
    apps = pd.DataFrame({k: np.concatenate(v) for k, v in recs.items()})
    pos = apps.loc[apps["hired"] == 1, ["seeker_id", "vacancy_id"]].reset_index(drop=True)
    return HistorySample(apps, pos)

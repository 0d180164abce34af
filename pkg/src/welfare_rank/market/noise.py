"""Controlled measurement error on logged score columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import DomainError, SchemaError
from .population import NOISE, substream

PROTECTED = ("clicked", "applied", "hired", "seeker_id", "vacancy_id", "arm", "slot")


@dataclass(frozen=True)
class MeasurementErrorSpec:
    """Additive mean-zero normal noise.

    ``iid=True`` draws independently per row; otherwise one draw per seeker is
    shared by all of that seeker's rows.
    """

    columns: tuple[str, ...]
    variance: float
    iid: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise DomainError("error variance must be non-negative")


def inject_measurement_error(log: pd.DataFrame, spec: MeasurementErrorSpec) -> pd.DataFrame:
    """Copy of ``log`` with noisy score columns; originals kept as ``<col>_true``."""
    bad = [c for c in spec.columns if c in PROTECTED]
    if bad:
        raise SchemaError(f"refusing to perturb outcome or key columns {bad}")
    missing = [c for c in spec.columns if c not in log.columns]
    if missing:
        raise SchemaError(f"columns not in the log: {missing}")
    out = log.copy()
    sd = float(np.sqrt(spec.variance))
    for n_col, col in enumerate(spec.columns):
        out[f"{col}_true"] = log[col]
        rng = substream(spec.seed, n_col, NOISE)
        if spec.iid:
            e = rng.standard_normal(len(log))
        else:
            ids, inv = np.unique(log["seeker_id"].to_numpy(), return_inverse=True)
            e = rng.standard_normal(ids.size)[inv]
        out[col] = log[col].to_numpy(dtype=float) + sd * e
    return out

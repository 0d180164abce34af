"""Criteria-weighted adequacy score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, SchemaError

PES_WEIGHTS: tuple[tuple[str, float], ...] = (
    ("occupation", 0.332),
    ("skills_in_occupation", 0.332),
    ("geographic_mobility", 0.1),
    ("reservation_wage", 0.066),
    ("diploma", 0.033),
    ("working_hours", 0.033),
    ("driving_license", 0.033),
    ("languages", 0.033),
    ("experience_in_occupation", 0.033),
    ("contract_type_and_duration", 0.003),
)


@dataclass(frozen=True)
class WeightProfile:
    """Ordered criterion weights. The default weights sum to 0.998 and are not renormalized."""

    items: tuple[tuple[str, float], ...] = PES_WEIGHTS

    def __post_init__(self):
        items = tuple((str(n), float(w)) for n, w in self.items)
        if not items:
            raise DomainError("a weight profile needs at least one criterion")
        if any(w < 0 for _, w in items):
            raise DomainError("criterion weights must be non-negative")
        if len({n for n, _ in items}) != len(items):
            raise DomainError("criterion names must be unique")
        object.__setattr__(self, "items", items)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.items]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.items])

    def __len__(self):
        return len(self.items)


def u_score(c, w: WeightProfile | None = None):
    """Sum_k w_k c_k over the last axis of ``c``."""
    w = WeightProfile() if w is None else w
    c = np.asarray(c, dtype=float)
    if c.shape[-1:] != (len(w),):
        raise SchemaError(f"expected {len(w)} consistency measures, got shape {c.shape}")
    if np.any((c < 0) | (c > 1)):
        raise DomainError("consistency measures must lie in [0, 1]")
    return c @ w.weights

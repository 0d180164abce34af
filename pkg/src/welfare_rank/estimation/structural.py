"""Structural primitives implied by the application logit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..search import softplus
from .linear import FitResult


@dataclass(frozen=True)
class StructuralEstimates:
    """From Pr(apply) = expit(alpha U - beta / P + gamma).

    sigma = 1 / alpha and the cost term k_bar + R_bar = beta / alpha.
    """

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"utility coefficient must be positive to identify sigma, got {self.alpha}")

    @property
    def sigma(self) -> float:
        return 1.0 / self.alpha

    @property
    def cost(self) -> float:
        return self.beta / self.alpha

    def delta(self, p, U):
        return np.asarray(U, dtype=float) - self.cost / np.asarray(p, dtype=float) + self.gamma / self.alpha

    def gamma_index(self, p, U):
        p = np.asarray(p, dtype=float)
        return p * softplus(self.alpha * np.asarray(U, dtype=float) + self.gamma - self.beta / p) / self.alpha

    def to_dict(self) -> dict[str, float]:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma, "sigma": self.sigma,
                "k_bar_plus_R_bar": self.cost}


def recover_structural(fit: FitResult) -> StructuralEstimates:
    """Accepts fits with (U, inv_P, const) or the constrained (U, inv_P_minus_one) design."""
    if "inv_P" in fit.names:
        return StructuralEstimates(fit["U"], -fit["inv_P"], fit["const"])
    beta = -fit["inv_P_minus_one"]
    return StructuralEstimates(fit["U"], beta, beta)

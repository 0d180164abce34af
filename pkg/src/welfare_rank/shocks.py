"""Taste-shock families and fixed-node quadrature over their support."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError

FAMILIES = ("logistic", "gumbel", "normal")

EULER_GAMMA = 0.5772156649015329


@lru_cache(maxsize=16)
def _unit_nodes(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class ShockDistribution:
    """Mean-zero taste shock.

    ``sigma`` is the logistic scale of the model. The gumbel and normal
    families are rescaled to the variance of a logistic with that scale,
    so the logistic member coincides with the model's shock. With
    ``unit_variance=True`` every family is rescaled to variance one instead.
    """

    family: str = "logistic"
    sigma: float = 1.0
    unit_variance: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(
                f"unsupported shock family {self.family!r}; expected one of {FAMILIES}"
            )
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    @property
    def sd(self) -> float:
        if self.unit_variance:
            return 1.0
        return self.sigma * math.pi / math.sqrt(3.0)

    @property
    def frozen(self):
        sd = self.sd
        if self.family == "logistic":
            return stats.logistic(loc=0.0, scale=sd * math.sqrt(3.0) / math.pi)
        if self.family == "normal":
            return stats.norm(loc=0.0, scale=sd)
        beta = sd * math.sqrt(6.0) / math.pi
        return stats.gumbel_r(loc=-beta * EULER_GAMMA, scale=beta)

    def pdf(self, x):
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            out = self.frozen.pdf(x)
        return np.nan_to_num(out, nan=0.0)

    def cdf(self, x):
        return self.frozen.cdf(x)

    def sf(self, x):
        return self.frozen.sf(x)

    def ppf(self, q):
        return self.frozen.ppf(q)

    def total_mass(self, nodes: int = 256) -> float:
        """Integral of the density over the real line under the quadrature rule."""
        t, w = _unit_nodes(nodes)
        c = self.sd
        y = c * t / (1.0 - t)
        jac = c / (1.0 - t) ** 2
        return float(np.sum(w * jac * (self.pdf(y) + self.pdf(-y))))

    def expected_positive_part(self, delta, nodes: int = 256):
        """E[(delta + eps)_+] by Gauss-Legendre on a mapped half-line.

        For delta <= 0 the right tail above -delta is integrated directly.
        For delta > 0 the identity E[X_+] = E[X] + E[(-X)_+] moves the work
        to the left tail, which keeps the integrand concentrated.
        """
        if nodes < 32:
            raise DomainError(f"quadrature needs at least 32 nodes, got {nodes}")
        delta = np.asarray(delta, dtype=float)
        t, w = _unit_nodes(nodes)
        c = self.sd
        y = c * t / (1.0 - t)
        jac = c / (1.0 - t) ** 2
        d = delta[..., None]
        neg = d <= 0
        # right tail: eps = -delta + y, integrand y * f(eps)
        # left tail:  eps = -delta - y, integrand y * f(eps)
        eps = np.where(neg, -d + y, -d - y)
        tail = np.sum(w * jac * y * self.pdf(eps), axis=-1)
        return np.where(delta <= 0, tail, delta + tail)

    def conditional_surplus(self, p_a):
        """E[delta + eps | delta + eps > 0] as a function of the apply probability."""
        p_a = np.asarray(p_a, dtype=float)
        if np.any((p_a <= 0) | (p_a >= 1)):
            raise DomainError("application probability must lie in (0, 1)")
        delta = -self.ppf(1.0 - p_a)
        return self.expected_positive_part(delta) / p_a

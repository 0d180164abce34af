"""Control-function estimators for endogenous or mismeasured regressors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import InputError
from .linear import FitResult, cluster_ids, ols
from .logit import fit_poisson

log = logging.getLogger(__name__)


@dataclass
class ControlFunctionFit:
    first_stage: list[FitResult]
    Pi: np.ndarray  # (n_instruments + n_controls, n_endogenous)
    v_hat: np.ndarray
    second_stage: FitResult
    endog_names: tuple[str, ...]
    rho: np.ndarray
    rho_se: np.ndarray | None
    first_stage_F: np.ndarray
    weak: bool
    ame: dict[str, float] = field(default_factory=dict)
    bootstrap_se: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.second_stage[name]

    def to_dict(self) -> dict:
        d = self.second_stage.to_dict()
        d.update(
            rho={n: float(r) for n, r in zip(self.endog_names, self.rho)},
            rho_se=None if self.rho_se is None else {n: float(s) for n, s in zip(self.endog_names, self.rho_se)},
            first_stage_F={n: float(f) for n, f in zip(self.endog_names, self.first_stage_F)},
            weak_instruments=self.weak,
            ame=self.ame,
            bootstrap_se=self.bootstrap_se,
        )
        return d


def _as2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def first_stage(W, T, Z, clusters, inst_names, ctrl_names, endog_names):
    """OLS of each endogenous column on instruments and controls; returns fits, Pi, residuals and F."""
    W, T, Z = _as2d(W), _as2d(T), _as2d(Z)
    D = np.hstack([T, Z])
    names = list(inst_names) + list(ctrl_names)
    fits, resid, F = [], np.empty_like(W), []
    for k in range(W.shape[1]):
        fit = ols(W[:, k], D, names, clusters)
        fits.append(fit)
        resid[:, k] = fit.extra["resid"]
        F.append(fit.wald(list(inst_names), label="instruments").F)
    Pi = np.column_stack([f.coef for f in fits])
    return fits, Pi, resid, np.array(F)


def two_stage_least_squares(y, W, T, Z) -> np.ndarray:
    """2SLS coefficients on [W, Z] with instruments [T, Z]."""
    W, T, Z = _as2d(W), _as2d(T), _as2d(Z)
    X = np.hstack([W, Z])
    D = np.hstack([T, Z])
    Xhat = D @ np.linalg.lstsq(D, X, rcond=None)[0]
    return np.linalg.solve(Xhat.T @ X, Xhat.T @ np.asarray(y, dtype=float))


def _prep(y, W, T, Z, endog_names, inst_names, ctrl_names):
    W, T, Z = _as2d(W), _as2d(T), _as2d(Z)
    if W.shape[1] != len(endog_names) or T.shape[1] != len(inst_names) or Z.shape[1] != len(ctrl_names):
        raise InputError("name lists must match the column counts of W, T and Z")
    if T.shape[1] < W.shape[1]:
        raise InputError("need at least as many instruments as endogenous regressors")
    return np.asarray(y, dtype=float), W, T, Z


def _second_names(endog_names, ctrl_names):
    return list(endog_names) + [f"v_{n}" for n in endog_names] + list(ctrl_names)


def _cluster_bootstrap(estimate, n_clusters_codes, reps, seed):
    codes, G = n_clusters_codes
    order = np.argsort(codes, kind="stable")
    starts = np.searchsorted(codes[order], np.arange(G))
    ends = np.append(starts[1:], codes.size)
    rng = np.random.default_rng([seed, 4242])
    draws = []
    for _ in range(reps):
        pick = rng.integers(G, size=G)
        rows = np.concatenate([order[starts[g] : ends[g]] for g in pick])
        try:
            draws.append(estimate(rows))
        except (np.linalg.LinAlgError, ArithmeticError, ValueError):
            continue
    return np.array(draws)


def fit_lpm_cf(y, W, T, Z, clusters, endog_names: Sequence[str], inst_names: Sequence[str],
               ctrl_names: Sequence[str], bootstrap: int = 200, seed: int = 0) -> ControlFunctionFit:
    """Linear probability model with first-stage residuals as controls.

    The coefficients on W equal two-stage least squares on the same design.
    Standard errors for rho (and all second-stage terms) come from a cluster
    bootstrap that re-runs both stages; the plug-in clustered covariance is kept
    in ``second_stage`` for reference.
    """
    y, W, T, Z = _prep(y, W, T, Z, endog_names, inst_names, ctrl_names)
    fits, Pi, v, F = first_stage(W, T, Z, clusters, inst_names, ctrl_names, endog_names)
    weak = bool(np.any(F < 1))
    if weak:
        log.warning("weak first stage: F = %s", np.round(F, 3))
    names = _second_names(endog_names, ctrl_names)
    X2 = np.hstack([W, v, Z])
    second = ols(y, X2, names, clusters)
    second.method = "lpm_cf"
    k = W.shape[1]
    out = ControlFunctionFit(fits, Pi, v, second, tuple(endog_names), second.coef[k : 2 * k], None, F, weak)
    if bootstrap:
        D = np.hstack([T, Z])

        def est(rows):
            vb = W[rows] - D[rows] @ np.linalg.lstsq(D[rows], W[rows], rcond=None)[0]
            Xb = np.hstack([W[rows], vb, Z[rows]])
            return np.linalg.lstsq(Xb, y[rows], rcond=None)[0]

        draws = _cluster_bootstrap(est, cluster_ids(clusters, y.size), bootstrap, seed)
        sd = draws.std(axis=0, ddof=1)
        out.rho_se = sd[k : 2 * k]
        out.bootstrap_se = {n: float(s) for n, s in zip(names, sd)}
        out.second_stage.extra["bootstrap_reps"] = int(draws.shape[0])
    return out


def fit_poisson_cf(y, W, T, Z, clusters, endog_names: Sequence[str], inst_names: Sequence[str],
                   ctrl_names: Sequence[str], bootstrap: int = 0, seed: int = 0) -> ControlFunctionFit:
    """Poisson MLE on [W, v_hat, Z] with AME_j = theta_j * mean(exp(index))."""
    y, W, T, Z = _prep(y, W, T, Z, endog_names, inst_names, ctrl_names)
    fits, Pi, v, F = first_stage(W, T, Z, clusters, inst_names, ctrl_names, endog_names)
    weak = bool(np.any(F < 1))
    names = _second_names(endog_names, ctrl_names)
    X2 = np.hstack([W, v, Z])
    second = fit_poisson(y, X2, names, clusters)
    second.method = "poisson_cf"
    k = W.shape[1]
    mean_mu = second.extra["mean_mu"]
    ame = {n: float(second.coef[j] * mean_mu) for j, n in enumerate(names[: 2 * k])}
    rho_se = second.se[k : 2 * k]
    out = ControlFunctionFit(fits, Pi, v, second, tuple(endog_names), second.coef[k : 2 * k], rho_se, F, weak, ame)
    if bootstrap:
        D = np.hstack([T, Z])

        def est(rows):
            vb = W[rows] - D[rows] @ np.linalg.lstsq(D[rows], W[rows], rcond=None)[0]
            return fit_poisson(y[rows], np.hstack([W[rows], vb, Z[rows]]), names).coef

        draws = _cluster_bootstrap(est, cluster_ids(clusters, y.size), bootstrap, seed)
        sd = draws.std(axis=0, ddof=1)
        out.rho_se = sd[k : 2 * k]
        out.bootstrap_se = {n: float(s) for n, s in zip(names, sd)}
    return out

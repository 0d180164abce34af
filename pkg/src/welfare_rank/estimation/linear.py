"""Least squares with seeker-clustered covariance, Wald tests and the reduced-form regression."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ..errors import InputError, RankDeficiencyError


@dataclass
class WaldTest:
    names: tuple[str, ...]
    F: float
    df_num: int
    df_den: int
    p_value: float


@dataclass
class FitResult:
    names: tuple[str, ...]
    coef: np.ndarray
    cov: np.ndarray
    nobs: int
    n_clusters: int
    method: str
    df_resid: int | None = None  # None: normal reference distribution
    converged: bool = True
    iterations: int = 0
    grad_norm: float = 0.0
    loglik: float | None = None
    tests: dict[str, WaldTest] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))

    @property
    def stat(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.se > 0, self.coef / self.se, 0.0)

    @property
    def p_values(self) -> np.ndarray:
        z = np.abs(self.stat)
        if self.df_resid is None:
            return 2 * stats.norm.sf(z)
        return 2 * stats.t.sf(z, self.df_resid)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no coefficient named {name!r}; have {self.names}") from None

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.index(name)])

    def se_of(self, name: str) -> float:
        return float(self.se[self.index(name)])

    def wald(self, names: Sequence[str], label: str | None = None) -> WaldTest:
        idx = [self.index(n) for n in names]
        b = self.coef[idx]
        V = self.cov[np.ix_(idx, idx)]
        q = len(idx)
        den = self.df_resid if self.df_resid is not None else max(self.n_clusters - 1, 1)
        if np.all(np.abs(b) < 1e-12):
            F = 0.0
        else:
            F = float(b @ np.linalg.pinv(V) @ b) / q
        p = float(stats.f.sf(F, q, den)) if F > 0 else 1.0
        test = WaldTest(tuple(names), F, q, den, p)
        self.tests[label or "+".join(names)] = test
        return test

    @property
    def AIC(self) -> float | None:
        return None if self.loglik is None else 2 * len(self.coef) - 2 * self.loglik

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"coef": self.coef, "se": self.se, "stat": self.stat, "p_value": self.p_values},
                            index=list(self.names))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "coefficients": {
                n: {"coef": float(c), "se": float(s), "p_value": float(p)}
                for n, c, s, p in zip(self.names, self.coef, self.se, self.p_values)
            },
            "tests": {k: {"names": list(t.names), "F": t.F, "df_num": t.df_num, "df_den": t.df_den,
                          "p_value": t.p_value} for k, t in self.tests.items()},
            "nobs": self.nobs,
            "n_clusters": self.n_clusters,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "loglik": self.loglik,
            "aic": self.AIC,
            "notes": list(self.notes),
            **{k: v for k, v in self.extra.items() if isinstance(v, (int, float, str, bool, list, dict))},
        }


def check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    """Raise naming the columns that are linear combinations of earlier ones."""
    if X.shape[0] < X.shape[1]:
        raise RankDeficiencyError(f"{X.shape[0]} rows cannot identify {X.shape[1]} coefficients", columns=tuple(names))
    if np.linalg.matrix_rank(X) == X.shape[1]:
        return
    scale = np.linalg.norm(X, axis=0)
    Xs = X / np.where(scale > 0, scale, 1.0)
    bad, kept = [], []
    for j in range(X.shape[1]):
        trial = kept + [j]
        if scale[j] == 0 or np.linalg.matrix_rank(Xs[:, trial], tol=1e-10) < len(trial):
            bad.append(names[j])
        else:
            kept.append(j)
    raise RankDeficiencyError(f"collinear design; redundant columns: {bad}", columns=tuple(bad))


def cluster_ids(clusters, n: int) -> tuple[np.ndarray, int]:
    if clusters is None:
        return np.arange(n), n
    codes, uniq = pd.factorize(np.asarray(clusters), sort=True)
    if codes.size != n:
        raise InputError("one cluster id per row is required")
    if np.any(codes < 0):
        raise InputError("cluster ids must not be missing")
    return codes, uniq.size


def cluster_meat(scores: np.ndarray, codes: np.ndarray, G: int) -> np.ndarray:
    """Sum over clusters of (sum of row scores)(sum of row scores)'."""
    S = np.zeros((G, scores.shape[1]))
    np.add.at(S, codes, scores)
    return S.T @ S


def ols(y, X, names: Sequence[str], clusters=None, small_sample: bool = True) -> FitResult:
    """OLS with cluster-robust sandwich covariance.

    Uses the G/(G-1) * (N-1)/(N-K) finite-sample factor and G-1 degrees of
    freedom for inference. Without clusters each row is its own cluster.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, K = X.shape
    if y.shape != (n,):
        raise InputError("outcome length differs from the design")
    check_rank(X, names)
    codes, G = cluster_ids(clusters, n)
    XtX_inv = np.linalg.inv(X.T @ X)
    beta = XtX_inv @ (X.T @ y)
    resid = y - X @ beta
    meat = cluster_meat(X * resid[:, None], codes, G)
    c = (G / (G - 1)) * ((n - 1) / (n - K)) if small_sample and G > 1 and n > K else 1.0
    cov = c * XtX_inv @ meat @ XtX_inv
    cov = 0.5 * (cov + cov.T)
    return FitResult(tuple(names), beta, cov, n, G, "ols", df_resid=max(G - 1, 1), extra={"resid": resid})


def classical_ols_cov(y, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    n, K = X.shape
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return resid @ resid / (n - K) * np.linalg.inv(X.T @ X)


def dummies(values, prefix: str, reference=None) -> tuple[np.ndarray, list[str], object]:
    """Indicator columns for every level except ``reference`` (default: first sorted level)."""
    values = np.asarray(values)
    levels = sorted(set(values.tolist()))
    ref = levels[0] if reference is None else reference
    if ref not in levels:
        raise InputError(f"reference level {ref!r} not present")
    keep = [lv for lv in levels if lv != ref]
    D = np.column_stack([(values == lv).astype(float) for lv in keep]) if keep else np.empty((values.size, 0))
    return D, [f"{prefix}{lv}" for lv in keep], ref


def fit_reduced_form(data: pd.DataFrame, outcome: str, arm: str = "arm", reference=None,
                     controls: Sequence[str] = ("slot",), cluster: str = "seeker_id") -> FitResult:
    """Outcome on arm dummies and categorical controls with a joint test of the arm effects."""
    y = data[outcome].to_numpy(dtype=float)
    T, t_names, ref = dummies(data[arm].to_numpy(), "T_", reference)
    cols, names = [np.ones((len(data), 1)), T], ["const", *t_names]
    for c in controls:
        D, d_names, _ = dummies(data[c].to_numpy(), f"{c}_")
        cols.append(D)
        names += d_names
    fit = ols(y, np.hstack(cols), names, data[cluster].to_numpy())
    fit.notes.append(f"reference arm: {ref}")
    if t_names:
        fit.wald(t_names, label="arms")
    return fit

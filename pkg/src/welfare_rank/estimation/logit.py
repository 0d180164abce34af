"""Binary logit and Poisson by Newton's method with cluster-robust covariance."""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, log_expit

from ..errors import DegenerateFitError, InputError, NumericError, SeparationError
from .linear import FitResult, check_rank, cluster_ids, cluster_meat

log = logging.getLogger(__name__)

GRAD_TOL = 1e-8
SEPARATION_BOUND = 50.0


def newton(loglik: Callable, theta0: np.ndarray, max_iter: int = 200, tol: float = GRAD_TOL,
           check_separation: bool = True):
    """Maximize a concave mean log-likelihood.

    ``loglik(theta)`` returns (value, gradient, hessian) of the mean
    log-likelihood. Steps are halved until the objective does not fall.
    Convergence is declared when the gradient max-norm drops below ``tol``.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    ll, g, H = loglik(theta)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < tol:
            return theta, ll, g, H, it - 1
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, -g, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta + t * step
            ll_c, g_c, H_c = loglik(cand)
            if np.isfinite(ll_c) and ll_c >= ll - 1e-15 * max(1.0, abs(ll)):
                break
            t *= 0.5
            if t < 1e-12:
                raise NumericError(
                    f"line search failed; gradient max-norm {np.max(np.abs(g)):.3g}", residual=float(np.max(np.abs(g)))
                )
        rising = ll_c > ll
        theta, ll, g, H = cand, ll_c, g_c, H_c
        if check_separation and np.max(np.abs(theta)) > SEPARATION_BOUND and rising:
            raise SeparationError(
                f"coefficients diverge (max |theta| = {np.max(np.abs(theta)):.1f}) with rising likelihood; "
                "the outcome is perfectly predicted by some regressors"
            )
    gmax = float(np.max(np.abs(g)))
    if gmax < tol:
        return theta, ll, g, H, max_iter
    raise NumericError(f"Newton did not converge in {max_iter} iterations; gradient max-norm {gmax:.3g}", residual=gmax)


def _logit_ll(y, X):
    n = y.size

    def f(theta):
        eta = X @ theta
        ll = float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta))) / n
        mu = expit(eta)
        g = X.T @ (y - mu) / n
        H = -(X * (mu * (1 - mu))[:, None]).T @ X / n
        return ll, g, H

    return f


def _sandwich(H_mean, scores, codes, G, n):
    """Cluster-robust covariance of an M-estimator with mean Hessian ``H_mean``."""
    A_inv = np.linalg.inv(-H_mean * n)
    meat = cluster_meat(scores, codes, G)
    c = G / (G - 1) if G > 1 else 1.0
    cov = c * A_inv @ meat @ A_inv
    return 0.5 * (cov + cov.T)


def fit_logit(y, X, names: Sequence[str], clusters=None, max_iter: int = 200, start=None) -> FitResult:
    """Logit MLE; covariance clustered on ``clusters`` (rows when None)."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise InputError("logit outcome must be binary")
    check_rank(X, names)
    n = y.size
    theta0 = np.zeros(X.shape[1]) if start is None else np.asarray(start, dtype=float)
    if y.min() == y.max():
        raise SeparationError("outcome is constant; the logit has no finite maximum")
    theta, ll, g, H, it = newton(_logit_ll(y, X), theta0, max_iter)
    codes, G = cluster_ids(clusters, n)
    resid = y - expit(X @ theta)
    cov = _sandwich(H, X * resid[:, None], codes, G, n)
    return FitResult(tuple(names), theta, cov, n, G, "logit", converged=True, iterations=it,
                     grad_norm=float(np.max(np.abs(g))), loglik=ll * n)


def logit_predict(fit: FitResult, X) -> np.ndarray:
    return expit(np.asarray(X, dtype=float) @ fit.coef)


def fit_poisson(y, X, names: Sequence[str], clusters=None, max_iter: int = 200) -> FitResult:
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if np.any(y < 0):
        raise InputError("Poisson outcome must be non-negative")
    if not np.any(y > 0):
        raise DegenerateFitError("all outcomes are zero; the Poisson intercept diverges")
    check_rank(X, names)
    n = y.size

    def f(theta):
        eta = np.clip(X @ theta, -700, 700)
        mu = np.exp(eta)
        ll = float(np.sum(y * eta - mu)) / n
        g = X.T @ (y - mu) / n
        H = -(X * mu[:, None]).T @ X / n
        return ll, g, H

    # start from the intercept-only solution when a constant column exists
    theta0 = np.zeros(X.shape[1])
    const = np.flatnonzero(np.all(X == 1.0, axis=0))
    if const.size:
        theta0[const[0]] = np.log(y.mean())
    theta, ll, g, H, it = newton(f, theta0, max_iter, check_separation=False)
    codes, G = cluster_ids(clusters, n)
    mu = np.exp(X @ theta)
    cov = _sandwich(H, X * (y - mu)[:, None], codes, G, n)
    return FitResult(tuple(names), theta, cov, n, G, "poisson", iterations=it,
                     grad_norm=float(np.max(np.abs(g))), loglik=ll * n, extra={"mean_mu": float(mu.mean())})


def structural_design(U, P, controls=None, control_names=(), constrained: bool = False):
    """Regressors for Pr(apply) = expit(alpha U - beta / P + gamma [+ controls]).

    The unconstrained design has columns (U, inv_P, const); beta is minus the
    inv_P coefficient. The constrained design imposes beta = gamma through the
    single column (1 - 1/P), named ``one_minus_inv_P``, whose coefficient is
    minus beta.
    """
    U = np.asarray(U, dtype=float)
    inv_P = 1.0 / np.asarray(P, dtype=float)
    if constrained:
        cols, names = [U, inv_P - 1.0], ["U", "inv_P_minus_one"]
    else:
        cols, names = [U, inv_P, np.ones_like(U)], ["U", "inv_P", "const"]
    X = np.column_stack(cols)
    if controls is not None:
        X = np.hstack([X, np.asarray(controls, dtype=float)])
        names += list(control_names)
    return X, names


def fit_structural_logit(y, U, P, clusters=None, controls=None, control_names=(), constrained=False) -> FitResult:
    X, names = structural_design(U, P, controls, control_names, constrained)
    fit = fit_logit(y, X, names, clusters)
    fit.extra["constrained"] = constrained
    return fit

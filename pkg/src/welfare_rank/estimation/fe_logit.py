"""Conditional (fixed-effects) logit for seeker panels.

Conditioning on each seeker's number of successes removes the seeker effect.
The denominator sums exp(x'b) over all outcome arrangements with that many
successes, i.e. an elementary symmetric polynomial of the weights exp(x_j'b),
computed by the usual one-item-at-a-time recursion. The recursion carries the
gradient and Hessian along with the value and runs vectorized over groups of
equal size.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd

from ..errors import DegenerateFitError, InputError
from .linear import FitResult, check_rank
from .logit import newton

MAX_GROUP = 20


def _esp_bucket(X: np.ndarray, w: np.ndarray, s: np.ndarray):
    """Value, gradient and Hessian of e_s(w) for a stack of equal-size groups.

    X: (G, n, K) regressors, w: (G, n) weights, s: (G,) success counts.
    """
    G, n, K = X.shape
    E = np.zeros((G, n + 1))
    dE = np.zeros((G, n + 1, K))
    hE = np.zeros((G, n + 1, K, K))
    E[:, 0] = 1.0
    for j in range(n):
        x = X[:, j, :]
        wj = w[:, j][:, None]
        E_prev, dE_prev, hE_prev = E[:, :-1].copy(), dE[:, :-1].copy(), hE[:, :-1].copy()
        E[:, 1:] += wj * E_prev
        dE[:, 1:] += wj[:, :, None] * (x[:, None, :] * E_prev[:, :, None] + dE_prev)
        xx = x[:, :, None] * x[:, None, :]
        outer = x[:, None, :, None] * dE_prev[:, :, None, :]
        hE[:, 1:] += wj[:, :, None, None] * (
            xx[:, None] * E_prev[:, :, None, None] + outer + np.swapaxes(outer, 2, 3) + hE_prev
        )
    g = np.arange(G)
    return E[g, s], dE[g, s], hE[g, s]


class _Panel:
    def __init__(self, y, X, groups, max_group):
        codes, _ = pd.factorize(np.asarray(groups), sort=True)
        n_groups = codes.max() + 1 if codes.size else 0
        sizes = np.bincount(codes, minlength=n_groups)
        succ = np.bincount(codes, weights=y, minlength=n_groups).astype(int)
        movers = (succ > 0) & (succ < sizes)
        self.n_groups = int(n_groups)
        self.n_movers = int(movers.sum())
        self.dropped = int(n_groups - self.n_movers)
        if self.n_movers == 0:
            raise DegenerateFitError("no seeker has both successes and failures; conditional logit is not identified")
        if sizes[movers].max() > max_group:
            raise InputError(f"group of size {sizes[movers].max()} exceeds the limit of {max_group}")
        keep = movers[codes]
        order = np.argsort(codes[keep], kind="stable")
        self.y = y[keep][order]
        self.X = X[keep][order]
        gc = codes[keep][order]
        self.nobs = int(keep.sum())
        self.buckets = []
        starts = np.flatnonzero(np.r_[True, gc[1:] != gc[:-1]])
        lens = np.diff(np.r_[starts, gc.size])
        for size in np.unique(lens):
            sel = starts[lens == size]
            rows = sel[:, None] + np.arange(size)[None, :]
            self.buckets.append((rows, self.y[rows].sum(1).astype(int)))

    def loglik(self, beta, per_group: bool = False):
        K = beta.size
        ll, g, H = 0.0, np.zeros(K), np.zeros((K, K))
        scores = []
        for rows, s in self.buckets:
            Xb = self.X[rows]
            eta = Xb @ beta
            shift = eta.max(axis=1, keepdims=True)
            w = np.exp(eta - shift)
            E, dE, hE = _esp_bucket(Xb, w, s)
            # the per-group shift scales e_s by exp(-s * shift); gradients of the
            # log are unaffected
            num = np.einsum("gn,gn->g", self.y[rows], eta)
            ll += float(np.sum(num - np.log(E) - s * shift[:, 0]))
            sx = np.einsum("gn,gnk->gk", self.y[rows], Xb)
            grad_g = sx - dE / E[:, None]
            g += grad_g.sum(0)
            H -= np.sum(hE / E[:, None, None] - dE[:, :, None] * dE[:, None, :] / (E**2)[:, None, None], axis=0)
            if per_group:
                scores.append(grad_g)
        n = self.n_movers
        if per_group:
            return np.vstack(scores)
        return ll / n, g / n, H / n


def fit_conditional_logit_fe(y, X, groups, names: Sequence[str], max_group: int = MAX_GROUP) -> FitResult:
    """Conditional MLE on movers; standard errors clustered by group."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise InputError("outcome must be binary")
    panel = _Panel(y, X, groups, max_group)
    check_rank(panel.X - 0.0, names)
    theta, ll, g, H, it = newton(panel.loglik, np.zeros(X.shape[1]))
    n = panel.n_movers
    A_inv = np.linalg.inv(-H * n)
    S = panel.loglik(theta, per_group=True)
    c = n / (n - 1) if n > 1 else 1.0
    cov = c * A_inv @ (S.T @ S) @ A_inv
    fit = FitResult(tuple(names), theta, 0.5 * (cov + cov.T), panel.nobs, n, "conditional_logit",
                    iterations=it, grad_norm=float(np.max(np.abs(g))), loglik=ll * n)
    fit.extra.update(movers=panel.n_movers, dropped_groups=panel.dropped, model_cov=A_inv.tolist())
    fit.notes.append(f"{panel.dropped} groups without outcome variation dropped")
    return fit


def conditional_loglik_bruteforce(y, X, groups, beta) -> float:
    """Exhaustive-enumeration conditional log-likelihood; a test oracle for small groups."""
    from itertools import combinations

    y, X = np.asarray(y, float), np.asarray(X, float)
    total = 0.0
    for gid in np.unique(groups):
        m = np.asarray(groups) == gid
        yg, Xg = y[m], X[m]
        s = int(yg.sum())
        if s == 0 or s == yg.size:
            continue
        eta = Xg @ beta
        den = sum(np.exp(eta[list(c)].sum()) for c in combinations(range(yg.size), s))
        total += eta[yg == 1].sum() - np.log(den)
    return total

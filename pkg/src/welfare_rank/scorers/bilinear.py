"""Block-bilinear matching score trained with a triplet margin loss.

score(x, y) = sum_b phi_b(x_b)' A_b psi_b(y_b), with per-block affine maps
phi_b(x) = Wx_b x + cx_b and psi_b(y) = Wy_b y + cy_b (optionally passed through
tanh). All parameters live in one flat vector so gradients can be checked
against finite differences directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import DomainError, InputError, SchemaError

FORMAT_VERSION = 1
DEFAULT_BLOCKS = ("geography", "skills", "other")


@dataclass(frozen=True)
class Block:
    name: str
    dx: int
    dy: int
    h: int

    @property
    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return [
            ("Wx", (self.h, self.dx)),
            ("cx", (self.h,)),
            ("Wy", (self.h, self.dy)),
            ("cy", (self.h,)),
            ("A", (self.h, self.h)),
        ]

    @property
    def size(self) -> int:
        return sum(math.prod(s) for _, s in self.shapes)


@dataclass(frozen=True)
class TrainingConfig:
    margin: float = 1.0
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 64
    negatives: int = 10
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if not self.margin > 0:
            raise DomainError("margin must be positive")
        if self.negatives < 1 or self.epochs < 0 or self.batch_size < 1:
            raise DomainError("negatives, epochs and batch size must be positive")


@dataclass(frozen=True)
class BilinearScorer:
    blocks: tuple[Block, ...]
    theta: np.ndarray
    hidden: bool = False
    margin: float = 1.0
    final_loss: float | None = None
    history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (sum(b.size for b in self.blocks),):
            raise SchemaError("parameter vector does not match block dimensions")
        if not self.margin > 0:
            raise DomainError("margin must be positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def dx(self) -> int:
        return sum(b.dx for b in self.blocks)

    @property
    def dy(self) -> int:
        return sum(b.dy for b in self.blocks)

    def unpack(self, theta=None) -> list[dict[str, np.ndarray]]:
        theta = self.theta if theta is None else theta
        out, pos = [], 0
        for b in self.blocks:
            mats = {}
            for name, shape in b.shapes:
                n = math.prod(shape)
                mats[name] = theta[pos : pos + n].reshape(shape)
                pos += n
            out.append(mats)
        return out

    def _split(self, X, Y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[1] != self.dx or Y.shape[1] != self.dy:
            raise SchemaError(
                f"feature dimensions ({X.shape[1]}, {Y.shape[1]}) do not match scorer ({self.dx}, {self.dy})"
            )
        xs = np.split(X, np.cumsum([b.dx for b in self.blocks])[:-1], axis=1)
        ys = np.split(Y, np.cumsum([b.dy for b in self.blocks])[:-1], axis=1)
        return xs, ys

    def _act(self, z):
        return np.tanh(z) if self.hidden else z

    def score_pairs(self, X, Y, theta=None) -> np.ndarray:
        """Scores for row-aligned pairs (X[n], Y[n])."""
        xs, ys = self._split(X, Y)
        total = np.zeros(xs[0].shape[0])
        for m, xb, yb in zip(self.unpack(theta), xs, ys):
            phi = self._act(xb @ m["Wx"].T + m["cx"])
            psi = self._act(yb @ m["Wy"].T + m["cy"])
            total += np.einsum("nh,hk,nk->n", phi, m["A"], psi)
        return total

    def score_matrix(self, X, Y) -> np.ndarray:
        """All seeker-by-vacancy scores, shape (len(X), len(Y))."""
        xs, ys = self._split(X, Y)
        total = np.zeros((xs[0].shape[0], ys[0].shape[0]))
        for m, xb, yb in zip(self.unpack(), xs, ys):
            phi = self._act(xb @ m["Wx"].T + m["cx"])
            psi = self._act(yb @ m["Wy"].T + m["cy"])
            total += phi @ m["A"] @ psi.T
        return total

    def weighted_score_grad(self, X, Y, coef, theta=None) -> np.ndarray:
        """Gradient of sum_n coef[n] * score(X[n], Y[n]) with respect to theta."""
        xs, ys = self._split(X, Y)
        coef = np.asarray(coef, dtype=float)
        grads = []
        for m, xb, yb in zip(self.unpack(theta), xs, ys):
            phi = self._act(xb @ m["Wx"].T + m["cx"])
            psi = self._act(yb @ m["Wy"].T + m["cy"])
            g_phi = coef[:, None] * (psi @ m["A"].T)
            g_psi = coef[:, None] * (phi @ m["A"])
            gA = phi.T @ (coef[:, None] * psi)
            if self.hidden:
                g_phi = g_phi * (1 - phi**2)
                g_psi = g_psi * (1 - psi**2)
            grads += [
                (g_phi.T @ xb).ravel(),
                g_phi.sum(0),
                (g_psi.T @ yb).ravel(),
                g_psi.sum(0),
                gA.ravel(),
            ]
        return np.concatenate(grads)

    def with_theta(self, theta, **kw) -> "BilinearScorer":
        return replace(self, theta=np.asarray(theta, dtype=float), **kw)


def init_scorer(dims, hidden: bool = False, margin: float = 1.0, seed: int = 0, init_scale: float = 0.01,
                names=DEFAULT_BLOCKS, hidden_dims=None) -> BilinearScorer:
    """New scorer with near-identity feature maps and small random affinities.

    ``dims`` is a sequence of (dx, dy) per block. The latent width defaults to
    max(dx, dy) so the identity start loses no information.
    """
    rng = np.random.default_rng(seed)
    blocks, parts = [], []
    if len(names) < len(dims):
        names = tuple(names) + tuple(f"block{i}" for i in range(len(names), len(dims)))
    for i, (dx, dy) in enumerate(dims):
        h = max(dx, dy) if hidden_dims is None else hidden_dims[i]
        blocks.append(Block(names[i], int(dx), int(dy), int(h)))
        parts += [
            np.eye(h, dx).ravel() + init_scale * rng.standard_normal(h * dx),
            np.zeros(h),
            np.eye(h, dy).ravel() + init_scale * rng.standard_normal(h * dy),
            np.zeros(h),
            init_scale * rng.standard_normal(h * h),
        ]
    return BilinearScorer(tuple(blocks), np.concatenate(parts), hidden=hidden, margin=margin)


def triplet_loss(scorer: BilinearScorer, X, Ypos, Yneg, theta=None) -> tuple[float, np.ndarray]:
    """Mean hinge [margin - (S_pos - S_neg)]_+ over triplets and its gradient.

    Row n of X, Ypos and Yneg forms one triplet.
    """
    s_pos = scorer.score_pairs(X, Ypos, theta)
    s_neg = scorer.score_pairs(X, Yneg, theta)
    slack = scorer.margin - (s_pos - s_neg)
    active = (slack > 0).astype(float)
    n = len(slack)
    loss = float(np.sum(np.maximum(slack, 0.0))) / n
    grad = scorer.weighted_score_grad(X, Yneg, active / n, theta) - scorer.weighted_score_grad(X, Ypos, active / n, theta)
    return loss, grad


def sample_negatives(rng: np.random.Generator, n_pool: int, positives: np.ndarray, k: int) -> np.ndarray:
    """k distinct pool indices per row, uniform among those different from the positive."""
    k = min(k, n_pool - 1)
    if k < 1:
        raise InputError("the pool needs at least one vacancy besides the positive")
    out = np.empty((positives.size, k), dtype=np.int64)
    for i, pos in enumerate(positives):
        draw = rng.choice(n_pool - 1, size=k, replace=False)
        out[i] = draw + (draw >= pos)
    return out


def train_triplet(seeker_features, vacancy_features, positives, config: TrainingConfig | None = None,
                  scorer: BilinearScorer | None = None, block_dims=None, hidden: bool = False) -> BilinearScorer:
    """Fit a block-bilinear scorer by mini-batch SGD on the triplet margin loss.

    ``positives[i]`` is the row in ``vacancy_features`` hired by seeker i.
    Negatives are drawn uniformly without replacement from the other pool rows.
    """
    cfg = config or TrainingConfig()
    X = np.asarray(seeker_features, dtype=float)
    Y = np.asarray(vacancy_features, dtype=float)
    positives = np.asarray(positives, dtype=np.int64)
    if positives.size == 0:
        raise InputError("training needs at least one matched seeker")
    if X.shape[0] != positives.size:
        raise InputError("one positive vacancy per seeker is required")
    if np.any((positives < 0) | (positives >= Y.shape[0])):
        raise InputError("positive index outside the vacancy pool")
    if scorer is None:
        dims = block_dims or [(X.shape[1], Y.shape[1])]
        scorer = init_scorer(dims, hidden=hidden, margin=cfg.margin, seed=cfg.seed, init_scale=cfg.init_scale)
    else:
        scorer = replace(scorer, margin=cfg.margin)
    rng = np.random.default_rng([cfg.seed, 1])
    theta = scorer.theta.copy()
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(positives.size)
        total, count = 0.0, 0
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            neg = sample_negatives(rng, Y.shape[0], positives[idx], cfg.negatives)
            rows = np.repeat(idx, neg.shape[1])
            loss, grad = triplet_loss(scorer, X[rows], Y[positives[rows]], Y[neg.ravel()], theta)
            theta -= cfg.learning_rate * grad
            total += loss * rows.size
            count += rows.size
        history.append(total / count)
    final = history[-1] if history else None
    return scorer.with_theta(theta, final_loss=final, history=tuple(history))


def save_scorer(scorer: BilinearScorer, path) -> None:
    """Versioned decimal text: a JSON header line, then one line per parameter array."""
    header = {
        "format": "welfare-rank-bilinear",
        "version": FORMAT_VERSION,
        "hidden": scorer.hidden,
        "margin": scorer.margin,
        "final_loss": scorer.final_loss,
        "blocks": [[b.name, b.dx, b.dy, b.h] for b in scorer.blocks],
    }
    lines = [json.dumps(header, sort_keys=True)]
    for b, mats in zip(scorer.blocks, scorer.unpack()):
        for name, shape in b.shapes:
            vals = " ".join(repr(float(v)) for v in mats[name].ravel())
            lines.append(f"{b.name}.{name} {'x'.join(map(str, shape))} {vals}".rstrip())
    from ..io import atomic_write_text

    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_scorer(path) -> BilinearScorer:
    lines = Path(path).read_text().splitlines()
    try:
        header = json.loads(lines[0])
    except (IndexError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: unreadable scorer header") from exc
    if header.get("format") != "welfare-rank-bilinear" or header.get("version") != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported scorer format {header.get('format')} v{header.get('version')}")
    blocks = tuple(Block(n, dx, dy, h) for n, dx, dy, h in header["blocks"])
    parts = []
    expected = [(f"{b.name}.{name}", shape) for b in blocks for name, shape in b.shapes]
    if len(lines) - 1 != len(expected):
        raise SchemaError(f"{path}: expected {len(expected)} parameter lines, found {len(lines) - 1}")
    for lineno, (line, (label, shape)) in enumerate(zip(lines[1:], expected), start=2):
        tokens = line.split()
        if tokens[0] != label or tokens[1] != "x".join(map(str, shape)):
            raise SchemaError(f"{path}:{lineno}: expected {label} with shape {shape}")
        vals = np.array([float(t) for t in tokens[2:]])
        if vals.size != math.prod(shape):
            raise SchemaError(f"{path}:{lineno}: wrong number of values for {label}")
        parts.append(vals)
    return BilinearScorer(blocks, np.concatenate(parts), hidden=bool(header["hidden"]),
                          margin=float(header["margin"]), final_loss=header.get("final_loss"))

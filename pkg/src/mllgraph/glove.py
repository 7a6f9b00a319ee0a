"""Label embeddings from co-occurrence counts via a weighted log-bilinear fit."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cooccur import WeightingConfig, weight_matrix


@dataclass(frozen=True)
class GloveConfig:
    d: int = 32
    epochs: int = 256
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("embedding dimension must be at least 2")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass
class EmbeddingParams:
    """Main and context vectors plus their biases."""

    w: np.ndarray
    w_ctx: np.ndarray
    b: np.ndarray
    b_ctx: np.ndarray


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Final per-class embeddings: the sum of main and context vectors."""

    vectors: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.vectors, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] < 2:
            raise ValueError("embeddings must be (C, d) with d >= 2")
        if not np.all(np.isfinite(Z)):
            raise ValueError("embeddings must be finite")
        object.__setattr__(self, "vectors", Z)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


class GloveDivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"objective became non-finite at epoch {epoch}")
        self.epoch = epoch


def _residuals(params: EmbeddingParams, counts: np.ndarray, wcfg: WeightingConfig):
    X = np.asarray(counts, dtype=np.float64)
    F = weight_matrix(X, wcfg)
    mask = X > 0
    logX = np.where(mask, np.log(np.where(mask, X, 1.0)), 0.0)
    R = params.w @ params.w_ctx.T + params.b[:, None] + params.b_ctx[None, :] - logX
    return F, np.where(mask, R, 0.0)


def glove_loss(params: EmbeddingParams, counts: np.ndarray, wcfg: WeightingConfig) -> float:
    """Sum over nonzero cells of f(X_ij) (w_i.w~_j + b_i + b~_j - log X_ij)^2."""
    F, R = _residuals(params, counts, wcfg)
    return float(np.sum(F * R * R))


def glove_gradients(params: EmbeddingParams, counts: np.ndarray, wcfg: WeightingConfig) -> EmbeddingParams:
    """Analytic gradients of glove_loss for all four parameter blocks."""
    F, R = _residuals(params, counts, wcfg)
    E = 2.0 * F * R
    return EmbeddingParams(
        w=E @ params.w_ctx,
        w_ctx=E.T @ params.w,
        b=E.sum(axis=1),
        b_ctx=E.sum(axis=0),
    )


@dataclass
class GloveResult:
    embedding: EmbeddingMatrix
    loss_trace: np.ndarray  # loss_trace[0] is the pre-training objective
    params: EmbeddingParams


def train_glove(counts: np.ndarray, cfg: GloveConfig, wcfg: WeightingConfig) -> GloveResult:
    """Full-batch Adam fit of the weighted log-bilinear objective."""
    X = np.asarray(counts, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("counts must be square")
    C = X.shape[0]
    rng = np.random.default_rng(cfg.seed)
    s = cfg.init_scale
    params = EmbeddingParams(
        w=rng.uniform(-s, s, (C, cfg.d)),
        w_ctx=rng.uniform(-s, s, (C, cfg.d)),
        b=rng.uniform(-s, s, C),
        b_ctx=rng.uniform(-s, s, C),
    )
    blocks = ("w", "w_ctx", "b", "b_ctx")
    m = {k: np.zeros_like(getattr(params, k)) for k in blocks}
    v = {k: np.zeros_like(getattr(params, k)) for k in blocks}
    trace = np.empty(cfg.epochs + 1)
    trace[0] = glove_loss(params, X, wcfg)
    if not np.isfinite(trace[0]):
        raise GloveDivergenceError(0)
    for t in range(1, cfg.epochs + 1):
        grads = glove_gradients(params, X, wcfg)
        for k in blocks:
            g = getattr(grads, k)
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g
            m_hat = m[k] / (1.0 - cfg.beta1 ** t)
            v_hat = v[k] / (1.0 - cfg.beta2 ** t)
            getattr(params, k)[...] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        trace[t] = glove_loss(params, X, wcfg)
        if not np.isfinite(trace[t]):
            raise GloveDivergenceError(t)
    Z = EmbeddingMatrix(params.w + params.w_ctx)
    return GloveResult(embedding=Z, loss_trace=trace, params=params)


def write_embeddings_csv(path, vectors: np.ndarray, names) -> None:
    Z = np.asarray(vectors, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("name," + ",".join(f"e{j}" for j in range(Z.shape[1])) + "\n")
        for name, row in zip(names, Z):
            fh.write(name + "," + ",".join(repr(float(x)) for x in row) + "\n")


def read_embeddings_csv(path):
    """Inverse of write_embeddings_csv; returns (names, vectors)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError("empty embeddings file")
    names = []
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        names.append(parts[0])
        rows.append([float(x) for x in parts[1:]])
    return names, np.asarray(rows, dtype=np.float64)

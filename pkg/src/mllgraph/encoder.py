"""Feature encoder: a small leaky-rectifier MLP with a linear last layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EncoderConfig:
    layer_widths: tuple = (16, 32)
    slope: float = 0.2
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if not widths or any(w < 1 for w in widths):
            raise ValueError("layer_widths must be positive")
        if self.slope < 0:
            raise ValueError("slope must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]


@dataclass
class EncoderParams:
    weights: list
    biases: list
    slope: float = 0.2

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching weight/bias lists")
        for W, b in zip(self.weights, self.biases):
            if W.shape[1] != b.shape[0]:
                raise ValueError(f"bias {b.shape} does not match weights {W.shape}")
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"layer width mismatch: {a.shape} feeds {b.shape}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]


def init_encoder(input_dim: int, cfg: EncoderConfig) -> EncoderParams:
    """Fan-in uniform weights, zero biases."""
    if input_dim < 1:
        raise ValueError("input_dim must be positive")
    rng = np.random.default_rng(cfg.seed)
    dims = (input_dim,) + cfg.layer_widths
    weights = []
    biases = []
    for i in range(len(dims) - 1):
        bound = 1.0 / np.sqrt(dims[i])
        weights.append(rng.uniform(-bound, bound, (dims[i], dims[i + 1])))
        biases.append(np.zeros(dims[i + 1]))
    return EncoderParams(weights, biases, cfg.slope)


@dataclass
class EncodeCache:
    inputs: list
    preacts: list
    single: bool


def encode(features: np.ndarray, params: EncoderParams):
    """Map features to representations; accepts one vector or a batch.

    Hidden layers use the leaky rectifier, the last layer is linear.
    Returns (representations, cache) with the cache feeding encoder_gradients.
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != params.input_dim:
        raise ValueError(f"feature length {h.shape[1]} != encoder input {params.input_dim}")
    n_layers = len(params.weights)
    inputs = []
    preacts = []
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ W + b
        preacts.append(z)
        if i == n_layers - 1:
            h = z
        else:
            h = np.where(z >= 0, z, params.slope * z)
    out = h[0] if single else h
    return out, EncodeCache(inputs, preacts, single)


def encoder_gradients(upstream: np.ndarray, cache: EncodeCache, params: EncoderParams):
    """Backprop d(loss)/d(representations); returns (dW list, db list, d(features))."""
    dh = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    n_layers = len(params.weights)
    dWs = [None] * n_layers
    dbs = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        if i == n_layers - 1:
            dz = dh
        else:
            z = cache.preacts[i]
            dz = dh * np.where(z >= 0, 1.0, params.slope)
        dWs[i] = cache.inputs[i].T @ dz
        dbs[i] = dz.sum(axis=0)
        dh = dz @ params.weights[i].T
    dx = dh[0] if cache.single else dh
    return dWs, dbs, dx

"""Dense float64 numerics: MLP encoder + linear head with manual gradients,
Adam with step decay, and a central finite-difference checker.

Matrices are plain 2-D ``numpy.ndarray`` of dtype float64, one sample per row.
Weights are stored as ``(fan_in, fan_out)`` so a layer is ``x @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateEmbeddingError, ShapeError

NORM_EPS = 1e-12


def as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


@dataclass
class EncoderParams:
    """Encoder layers ``[(W, b), ...]`` followed by a linear head ``(W, b)``.

    Hidden layers use ReLU; the last encoder layer is linear and its output
    is the embedding. The head maps an embedding to one malignancy logit.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]
    head: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        prev = None
        for W, b in self.layers:
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ShapeError(f"bad layer shapes {W.shape}, {b.shape}")
            if prev is not None and W.shape[0] != prev:
                raise ShapeError(f"layer input {W.shape[0]} does not chain from {prev}")
            prev = W.shape[1]
        hW, hb = self.head
        if hW.shape != (self.embed_dim, 1) or hb.shape != (1,):
            raise ShapeError(f"head shapes {hW.shape}, {hb.shape} for embed_dim {self.embed_dim}")

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def embed_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in self.layers:
            out += [W, b]
        return out + list(self.head)

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "EncoderParams":
        arrays = list(arrays)
        if len(arrays) != 2 * len(self.layers) + 2:
            raise ShapeError("array count does not match parameter structure")
        for new, old in zip(arrays, self.arrays()):
            if new.shape != old.shape:
                raise ShapeError(f"shape {new.shape} != {old.shape}")
        layers = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(len(self.layers))]
        return EncoderParams(layers, (arrays[-2], arrays[-1]))

    def zeros_like(self) -> "EncoderParams":
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_flat(self, vec: np.ndarray) -> "EncoderParams":
        out, pos = [], 0
        for a in self.arrays():
            out.append(np.array(vec[pos:pos + a.size], dtype=np.float64).reshape(a.shape))
            pos += a.size
        if pos != vec.size:
            raise ShapeError(f"flat vector length {vec.size} != {pos}")
        return self.with_arrays(out)

    def save(self, path) -> None:
        np.savez(path, **{f"a{i}": a for i, a in enumerate(self.arrays())},
                 n_layers=np.array(len(self.layers)))

    @classmethod
    def load(cls, path) -> "EncoderParams":
        with np.load(path) as z:
            n = int(z["n_layers"])
            arrays = [z[f"a{i}"] for i in range(2 * n + 2)]
        layers = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(n)]
        return cls(layers, (arrays[-2], arrays[-1]))


def init_encoder(input_dim: int, hidden: Sequence[int] = (64, 32), embed_dim: int = 16,
                 rng: np.random.Generator | None = None) -> EncoderParams:
    """He-normal weights, zero biases."""
    rng = rng if rng is not None else np.random.default_rng(0)
    dims = [input_dim, *hidden, embed_dim]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        layers.append((W, np.zeros(fan_out)))
    head = (rng.normal(0.0, np.sqrt(1.0 / embed_dim), size=(embed_dim, 1)), np.zeros(1))
    return EncoderParams(layers, head)


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)  # pre-activation per layer
    post: list[np.ndarray] = field(default_factory=list)  # input to each layer


def mlp_forward(params: EncoderParams, inputs) -> tuple[np.ndarray, ForwardCache]:
    x = as_matrix(inputs)
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, encoder expects {params.input_dim}")
    cache = ForwardCache(inputs=x)
    h = x
    last = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        cache.post.append(h)
        z = h @ W + b
        cache.pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, cache


def mlp_backward(params: EncoderParams, cache: ForwardCache,
                 grad_embeddings) -> tuple[EncoderParams, np.ndarray]:
    """Gradients of a scalar loss w.r.t. encoder weights and inputs.

    The returned ``EncoderParams`` carries zero head gradients; the head has its
    own backward in :func:`head_backward`.
    """
    g = as_matrix(grad_embeddings)
    if g.shape != cache.pre[-1].shape:
        raise ShapeError(f"upstream gradient {g.shape} != embeddings {cache.pre[-1].shape}")
    grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[i]
        if i != len(params.layers) - 1:
            g = g * (cache.pre[i] > 0.0)
        grads[i] = (cache.post[i].T @ g, g.sum(axis=0))
        g = g @ W.T
    hW, hb = params.head
    return EncoderParams(grads, (np.zeros_like(hW), np.zeros_like(hb))), g


def head_forward(params: EncoderParams, embeddings) -> np.ndarray:
    """Malignancy logits, one per row."""
    e = as_matrix(embeddings)
    if e.shape[1] != params.embed_dim:
        raise ShapeError(f"embedding dim {e.shape[1]} != {params.embed_dim}")
    W, b = params.head
    return (e @ W + b)[:, 0]


def head_backward(params: EncoderParams, embeddings, grad_logits):
    e = as_matrix(embeddings)
    g = np.asarray(grad_logits, dtype=np.float64).reshape(-1, 1)
    if g.shape[0] != e.shape[0]:
        raise ShapeError("logit gradient length does not match embeddings")
    W, _ = params.head
    return (e.T @ g, g.sum(axis=0)), g @ W.T


def l2_normalize_rows(m) -> np.ndarray:
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms < NORM_EPS):
        raise DegenerateEmbeddingError("row with norm below 1e-12 cannot be normalized")
    return m / norms


def l2_normalize_rows_backward(raw, grad_unit) -> np.ndarray:
    """Pull a gradient on ``raw / ||raw||`` back to ``raw``."""
    raw = as_matrix(raw)
    g = as_matrix(grad_unit)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    unit = raw / norms
    return (g - unit * np.sum(unit * g, axis=1, keepdims=True)) / norms


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params, grads and moments differ in length")
    t = state.step_count + 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t, b1, b2, eps)


def lr_schedule(epoch: int, base_lr: float, decay: float = 0.1, every: int = 50) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return base_lr * decay ** (epoch // every)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x, flat_g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        up = f(x)
        flat_x[i] = orig - h
        down = f(x)
        flat_x[i] = orig
        flat_g[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-4) -> float:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``, maximised."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0

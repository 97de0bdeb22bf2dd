"""Classification, contrastive and joint losses with analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .pairing import PairSets
from .tensor import as_matrix

PROB_CLAMP = 1e-12


@dataclass
class LossOutput:
    value: float
    grad_anchors: np.ndarray | None = None
    grad_candidates: np.ndarray | None = None
    grad_logits: np.ndarray | None = None
    per_anchor: np.ndarray | None = None
    skipped: int = 0  # anchors with no positive, contributing zero


@dataclass(frozen=True)
class JointLossConfig:
    alpha: float = 0.5
    temperature: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0")


def cosine_similarity_matrix(anchors, candidates) -> np.ndarray:
    """Dot products of already unit-normalized rows."""
    a, c = as_matrix(anchors), as_matrix(candidates)
    if a.shape[1] != c.shape[1]:
        raise ShapeError(f"column mismatch {a.shape[1]} vs {c.shape[1]}")
    return a @ c.T


def contrastive_loss(anchors, candidates, pairs: PairSets, temperature: float = 1.0,
                     normalize_positives: bool = False) -> LossOutput:
    """Sum over positives of ``-log softmax`` restricted to ``P(i) | N(i)``, averaged
    over all ``N_b`` anchors.

    ``normalize_positives`` divides each anchor's sum by ``|P(i)|``; off by
    default. Anchors without positives are skipped (counted in ``skipped``)
    but still count in the ``1/N_b`` average.
    """
    if not temperature > 0:
        raise ConfigError("temperature must be > 0")
    a, c = as_matrix(anchors), as_matrix(candidates)
    n = a.shape[0]
    if pairs.pos.shape != (n, c.shape[0]):
        raise ShapeError(f"pair masks {pairs.pos.shape} do not match {n}x{c.shape[0]}")

    logits = cosine_similarity_matrix(a, c) / temperature
    pos = pairs.pos
    support = pos | pairs.neg
    n_pos = pos.sum(axis=1)
    active = n_pos > 0

    masked = np.where(support, logits, -np.inf)
    row_max = np.max(masked, axis=1, keepdims=True)
    row_max[~active] = 0.0
    expd = np.where(support, np.exp(logits - row_max), 0.0)
    denom = expd.sum(axis=1, keepdims=True)
    denom[~active] = 1.0
    log_z = row_max[:, 0] + np.log(denom[:, 0])

    if normalize_positives:
        weight = np.divide(1.0, n_pos, out=np.zeros(n), where=active)
    else:
        weight = active.astype(np.float64)
    per_anchor = weight * (n_pos * log_z - np.where(pos, logits, 0.0).sum(axis=1))
    per_anchor[~active] = 0.0
    value = float(per_anchor.sum() / n)

    # d value / d logits
    softmax = expd / denom
    g = (weight * n_pos)[:, None] * softmax - weight[:, None] * pos
    g[~active] = 0.0
    g /= n * temperature
    return LossOutput(value=value, grad_anchors=g @ c, grad_candidates=g.T @ a,
                      per_anchor=per_anchor, skipped=int((~active).sum()))


def binary_cross_entropy(scores, labels) -> LossOutput:
    """Mean two-class cross entropy over probabilities ``scores``.

    ``grad_logits`` is the gradient w.r.t. the pre-sigmoid logits, ``(p - y) / N``.
    """
    p = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ShapeError(f"{p.size} scores vs {y.size} labels")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    value = -float(np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))
    return LossOutput(value=value, grad_logits=(p - y) / p.size)


def _combine(a, b, alpha):
    if a is None and b is None:
        return None
    if b is None:
        return a
    scaled = alpha * b
    return scaled if a is None else a + scaled


def joint_loss(cls: LossOutput, con: LossOutput, config: JointLossConfig) -> LossOutput:
    alpha = config.alpha
    return LossOutput(
        value=cls.value + alpha * con.value,
        grad_anchors=_combine(cls.grad_anchors, con.grad_anchors, alpha),
        grad_candidates=_combine(cls.grad_candidates, con.grad_candidates, alpha),
        grad_logits=_combine(cls.grad_logits, con.grad_logits, alpha),
        skipped=con.skipped,
    )

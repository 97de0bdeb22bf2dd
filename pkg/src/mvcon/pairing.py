"""Positive / negative set construction for every contrastive variant.

Anchors are rows of view-A embeddings and candidates are rows of view-B
embeddings (dual-view). ``P(i)`` and ``N(i)`` index candidates, so the
anchor's own second augmentation ``i`` is always a positive. With
``dual_view=False`` anchors and candidates are the same rows and ``i`` is
dropped from both sets.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBatchError


class PairVariant(str, enum.Enum):
    LR = "LR"
    IR = "IR"
    LR_MINUS_SC = "LR(-SC)"
    LR_MINUS_DC = "LR(-DC)"
    LR_MINUS_ALL = "LR(-)"

    @classmethod
    def parse(cls, name: str) -> "PairVariant":
        key = name.strip()
        for v in cls:
            if key in (v.value, v.name) or key.upper() == v.name:
                return v
        raise ValueError(f"unknown pair variant {name!r}")


@dataclass(frozen=True)
class BatchLabels:
    lesion_ids: tuple
    class_labels: tuple

    def __init__(self, lesion_ids, class_labels):
        lesion_ids = tuple(lesion_ids)
        class_labels = tuple(int(c) for c in class_labels)
        if len(lesion_ids) == 0 or len(lesion_ids) != len(class_labels):
            raise InvalidBatchError("lesion_ids and class_labels must be non-empty and equal length")
        if any(c not in (0, 1) for c in class_labels):
            raise InvalidBatchError("class labels must be 0 or 1")
        seen = {}
        for lid, c in zip(lesion_ids, class_labels):
            if seen.setdefault(lid, c) != c:
                raise InvalidBatchError(f"lesion {lid!r} carries both class labels")
        object.__setattr__(self, "lesion_ids", lesion_ids)
        object.__setattr__(self, "class_labels", class_labels)

    def __len__(self):
        return len(self.lesion_ids)


@dataclass(frozen=True)
class PairSets:
    """Boolean masks ``pos[i, k]`` / ``neg[i, k]`` over anchors x candidates."""

    pos: np.ndarray
    neg: np.ndarray

    @property
    def positives(self) -> list[list[int]]:
        return [np.flatnonzero(row).tolist() for row in self.pos]

    @property
    def negatives(self) -> list[list[int]]:
        return [np.flatnonzero(row).tolist() for row in self.neg]

    def __len__(self):
        return self.pos.shape[0]

    def permuted(self, perm) -> "PairSets":
        """Sets for the batch reordered so that new row ``r`` is old row ``perm[r]``."""
        perm = np.asarray(perm)
        return PairSets(self.pos[np.ix_(perm, perm)], self.neg[np.ix_(perm, perm)])


def build_pairs(variant: PairVariant, labels: BatchLabels, dual_view: bool = True) -> PairSets:
    variant = PairVariant(variant)
    lesion = np.asarray(labels.lesion_ids, dtype=object)
    y = np.asarray(labels.class_labels)
    n = len(lesion)
    same_lesion = lesion[:, None] == lesion[None, :]
    same_class = y[:, None] == y[None, :]
    eye = np.eye(n, dtype=bool)

    if variant is PairVariant.IR:
        pos, neg = eye.copy(), ~eye
    else:
        pos, neg = same_lesion.copy(), ~same_lesion
        if variant is PairVariant.LR_MINUS_SC:
            neg &= ~same_class
        elif variant is PairVariant.LR_MINUS_DC:
            neg &= same_class
        elif variant is PairVariant.LR_MINUS_ALL:
            neg[:] = False

    if not dual_view:
        pos &= ~eye
        neg &= ~eye
    return PairSets(pos, neg)

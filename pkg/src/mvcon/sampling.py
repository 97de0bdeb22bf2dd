"""Lesion-grouped batch sampling and lesion-level k-fold splits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError


@dataclass(frozen=True)
class BatchSpec:
    groups_per_batch: int = 8
    views_per_group: int = 8

    def __post_init__(self):
        if self.groups_per_batch < 1 or self.views_per_group < 1:
            raise ConfigError("groups_per_batch and views_per_group must be >= 1")

    @property
    def batch_size(self) -> int:
        return self.groups_per_batch * self.views_per_group


@dataclass(frozen=True)
class FoldSplit:
    fold_count: int
    assignment: dict  # lesion_id -> fold index

    def fold(self, i: int) -> list:
        return [lid for lid, f in self.assignment.items() if f == i]

    def train_test(self, i: int) -> tuple[list, list]:
        test = self.fold(i)
        train = [lid for lid, f in self.assignment.items() if f != i]
        return train, test


def sample_batch(index: Mapping[object, Sequence[int]], spec: BatchSpec,
                 rng: np.random.Generator) -> list[tuple[object, int]]:
    """Draw ``groups_per_batch`` distinct lesions, then ``views_per_group`` views of each.

    Views are drawn without replacement when a lesion has enough of them and
    with replacement otherwise.
    """
    lesions = list(index)
    if len(lesions) < spec.groups_per_batch:
        raise InsufficientDataError(
            f"{len(lesions)} lesions available, batch needs {spec.groups_per_batch}")
    chosen = rng.choice(len(lesions), size=spec.groups_per_batch, replace=False)
    batch = []
    for li in chosen:
        lid = lesions[li]
        views = np.asarray(index[lid])
        replace = len(views) < spec.views_per_group
        if replace:
            # every view appears at least once, the rest are resampled
            picks = np.concatenate([
                rng.permutation(views),
                rng.choice(views, size=spec.views_per_group - len(views), replace=True),
            ])
        else:
            picks = rng.choice(views, size=spec.views_per_group, replace=False)
        batch.extend((lid, int(v)) for v in picks)
    return batch


def batches_per_epoch(total_images: int, spec: BatchSpec) -> int:
    return max(1, math.ceil(total_images / spec.batch_size))


def kfold_split(lesion_ids, k: int, rng: np.random.Generator) -> FoldSplit:
    ids = sorted(set(lesion_ids), key=str)
    if k < 1 or k > len(ids):
        raise ConfigError(f"cannot split {len(ids)} lesions into {k} folds")
    order = rng.permutation(len(ids))
    assignment = {ids[j]: int(pos % k) for pos, j in enumerate(order)}
    return FoldSplit(k, dict(sorted(assignment.items(), key=lambda kv: str(kv[0]))))

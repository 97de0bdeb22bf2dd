"""Classification metrics, inner-lesion misclassification rate and the
weighted-KNN embedding probe. Malignant (label 1) is the positive class."""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, UndefinedMetricError
from .tensor import as_matrix, l2_normalize_rows

METRIC_KEYS = ("auc", "acc", "sensitivity", "precision", "specificity", "f1", "mcr")


@dataclass(frozen=True)
class PredictionRecord:
    lesion_id: str
    true_label: int
    score: float


@dataclass
class MetricsReport:
    """Undefined rates (zero denominator) are ``None``."""

    auc: float | None = None
    acc: float | None = None
    sensitivity: float | None = None
    precision: float | None = None
    specificity: float | None = None
    f1: float | None = None
    mcr: float | None = None
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    lesion_acc: float | None = None  # majority vote per lesion; supplementary

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class KnnConfig:
    k: int = 200
    knn_temperature: float = 0.07

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not self.knn_temperature > 0:
            raise ConfigError("knn_temperature must be > 0")


def _arrays(records: Sequence[PredictionRecord]):
    scores = np.array([r.score for r in records], dtype=np.float64)
    labels = np.array([r.true_label for r in records], dtype=np.int64)
    ids = [r.lesion_id for r in records]
    return scores, labels, ids


def roc_auc(scores, labels) -> float:
    """Mann-Whitney U / (n_pos * n_neg), ties counted as one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one record of each class")
    ranks = rankdata(s)  # average ranks over ties
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _ratio(num, den):
    return num / den if den else None


def confusion_metrics(scores, labels, threshold: float = 0.5) -> MetricsReport:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    sens = _ratio(tp, tp + fn)
    prec = _ratio(tp, tp + fp)
    f1 = None
    if sens is not None and prec is not None and (sens + prec) > 0:
        f1 = 2 * prec * sens / (prec + sens)
    return MetricsReport(acc=_ratio(tp + tn, tp + fp + tn + fn), sensitivity=sens,
                         precision=prec, specificity=_ratio(tn, tn + fp), f1=f1,
                         tp=tp, fp=fp, tn=tn, fn=fn)


def mcr(scores, labels, lesion_ids, threshold: float = 0.5) -> float:
    """Mean of (wrong views / views) over lesions with at least one wrong view; 0 if none."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.size == 0:
        raise UndefinedMetricError("MCR of an empty prediction set")
    wrong = (s >= threshold).astype(int) != y
    totals, errors = defaultdict(int), defaultdict(int)
    for lid, w in zip(lesion_ids, wrong):
        totals[lid] += 1
        errors[lid] += int(w)
    # exact rational mean, rounded once
    rates = [Fraction(errors[lid], totals[lid]) for lid in totals if errors[lid] > 0]
    return float(sum(rates) / len(rates)) if rates else 0.0


def lesion_vote_accuracy(scores, labels, lesion_ids, threshold: float = 0.5) -> float:
    """Majority vote of per-view predictions per lesion; ties go malignant."""
    votes = defaultdict(list)
    truth = {}
    for sc, lab, lid in zip(scores, labels, lesion_ids):
        votes[lid].append(sc >= threshold)
        truth[lid] = int(lab)
    correct = [int(np.mean(v) >= 0.5) == truth[lid] for lid, v in votes.items()]
    return float(np.mean(correct))


def evaluate_predictions(scores, labels, lesion_ids, threshold: float = 0.5) -> MetricsReport:
    report = confusion_metrics(scores, labels, threshold)
    report.auc = roc_auc(scores, labels)
    report.mcr = mcr(scores, labels, lesion_ids, threshold)
    report.lesion_acc = lesion_vote_accuracy(scores, labels, lesion_ids, threshold)
    return report


def evaluate(records: Sequence[PredictionRecord], threshold: float = 0.5) -> MetricsReport:
    return evaluate_predictions(*_arrays(records), threshold=threshold)


def weighted_knn_scores(train_embeddings, train_labels, queries,
                        config: KnnConfig) -> np.ndarray:
    """Malignant score per query from its k most cosine-similar training rows,
    each weighted by ``exp(sim / knn_temperature)``. Rows are L2-normalized
    first, so raw embeddings are fine.

    Ties at the k-th similarity go to the lower training index.
    """
    T, Q = l2_normalize_rows(train_embeddings), l2_normalize_rows(queries)
    y = np.asarray(train_labels)
    if config.k > T.shape[0]:
        raise ConfigError(f"k={config.k} exceeds reference set size {T.shape[0]}")
    sims = Q @ T.T
    order = np.argsort(-sims, axis=1, kind="stable")[:, :config.k]
    top = np.take_along_axis(sims, order, axis=1)
    w = np.exp((top - top[:, :1]) / config.knn_temperature)
    return (w * (y[order] == 1)).sum(axis=1) / w.sum(axis=1)


def knn_auc_sweep(train_embeddings, train_labels, test_embeddings, test_labels,
                  ks: Sequence[int], knn_temperature: float = 0.07) -> list[tuple[int, float]]:
    out = []
    for k in ks:
        scores = weighted_knn_scores(train_embeddings, train_labels, test_embeddings,
                                     KnnConfig(int(k), knn_temperature))
        out.append((int(k), roc_auc(scores, test_labels)))
    return out


def sweep_to_csv(series) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "auc"])
    for k, auc in series:
        w.writerow([k, repr(float(auc))])
    return buf.getvalue()


def default_k_grid(n_max: int = 200, points: int = 12) -> list[int]:
    """Log-spaced integers from 1 to ``n_max``, deduplicated and increasing."""
    return sorted({int(round(k)) for k in np.geomspace(1, n_max, points)})

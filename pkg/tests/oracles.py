"""Brute-force reference computations, deliberately naive and independent of
the package code paths they check."""
import math
from collections import defaultdict
from fractions import Fraction


def contrastive_bruteforce(anchors, candidates, positives, negatives, temperature=1.0):
    """Explicit double loop over the contrastive sum with math.exp / math.log."""
    n = len(anchors)
    total = 0.0
    per_anchor = []
    for i in range(n):
        sims = {}
        for k in set(positives[i]) | set(negatives[i]):
            sims[k] = sum(a * c for a, c in zip(anchors[i], candidates[k])) / temperature
        term = 0.0
        for j in positives[i]:
            denom = sum(math.exp(s) for s in sims.values())
            term -= math.log(math.exp(sims[j]) / denom)
        per_anchor.append(term)
        total += term
    return total / n, per_anchor


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    acc = 0.0
    for p in pos:
        for q in neg:
            acc += 1.0 if p > q else (0.5 if p == q else 0.0)
    return acc / (len(pos) * len(neg))


def mcr_recount(scores, labels, lesion_ids, threshold=0.5):
    per = defaultdict(lambda: [0, 0])
    for s, y, lid in zip(scores, labels, lesion_ids):
        pred = 1 if s >= threshold else 0
        per[lid][0] += int(pred != y)
        per[lid][1] += 1
    rates = [Fraction(w, n) for w, n in per.values() if w >= 1]
    return float(sum(rates, Fraction(0)) / len(rates)) if rates else 0.0


def knn_bruteforce(train, train_labels, query, k, temperature):
    sims = [(sum(a * b for a, b in zip(query, t)), idx) for idx, t in enumerate(train)]
    sims.sort(key=lambda p: (-p[0], p[1]))
    top = sims[:k]
    weights = [(math.exp(s / temperature), train_labels[idx]) for s, idx in top]
    return sum(w for w, y in weights if y == 1) / sum(w for w, _ in weights)


def linear_oracle_accuracy(records, fold_count=5, seed=0):
    """Per-view test accuracy of a least-squares linear classifier under the same
    lesion-level k-fold protocol; a separability reference for the benchmark."""
    import numpy as np
    from mvcon.sampling import kfold_split
    from mvcon.trainer import split_records

    split = kfold_split([r.lesion_id for r in records], fold_count, np.random.default_rng(seed))
    accs = []
    for f in range(fold_count):
        train, test = split_records(records, split.assignment, f)
        X = np.vstack([r.views for r in train])
        y = np.concatenate([[2.0 * r.label - 1.0] * r.n_views for r in train])
        Xb = np.hstack([X, np.ones((len(X), 1))])
        w, *_ = np.linalg.lstsq(Xb, y, rcond=None)
        Xt = np.vstack([r.views for r in test])
        yt = np.concatenate([[r.label] * r.n_views for r in test])
        pred = (np.hstack([Xt, np.ones((len(Xt), 1))]) @ w) >= 0
        accs.append(float(np.mean(pred == yt)))
    return float(np.mean(accs))

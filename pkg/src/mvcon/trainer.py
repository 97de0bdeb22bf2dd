"""Joint training loop, lesion-level cross-validation and ablation drivers.

One step: grouped batch -> two augmentations -> shared encoder -> contrastive
loss between normalized view-A anchors and view-B candidates, cross entropy
on the head over view A -> ``L_cls + alpha * L_con`` -> single backward ->
Adam with step-decayed learning rate.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .dataset import AugmentConfig, LesionRecord, augment_view, flatten
from .errors import ConfigError, InsufficientDataError, TrainingDiverged
from .evaluation import METRIC_KEYS, evaluate_predictions, knn_auc_sweep
from .losses import JointLossConfig, binary_cross_entropy, contrastive_loss, joint_loss
from .pairing import BatchLabels, PairVariant, build_pairs
from .sampling import BatchSpec, batches_per_epoch, kfold_split, sample_batch
from .tensor import (AdamState, EncoderParams, adam_step, head_backward, head_forward,
                     init_encoder, l2_normalize_rows, l2_normalize_rows_backward,
                     lr_schedule, mlp_backward, mlp_forward)

REPORT_KEYS = METRIC_KEYS + ("lesion_acc",)


@dataclass(frozen=True)
class TrainConfig:
    variant: PairVariant = PairVariant.LR
    alpha: float = 0.5
    temperature: float = 1.0
    epochs: int = 200
    base_lr: float = 1e-4
    lr_decay: float = 0.1
    lr_decay_every: int = 50
    batch: BatchSpec = field(default_factory=BatchSpec)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    dual_view: bool = True
    contrastive: bool = True  # False removes the contrastive branch entirely
    normalize_positives: bool = False
    hidden: tuple[int, ...] = (64, 32)
    embed_dim: int = 16
    threshold: float = 0.5
    knn_ks: tuple[int, ...] = (1, 5, 10, 20, 50, 100)
    knn_temperature: float = 0.07

    def __post_init__(self):
        object.__setattr__(self, "variant", PairVariant(self.variant))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "knn_ks", tuple(int(k) for k in self.knn_ks))
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        JointLossConfig(self.alpha, self.temperature)

    def echo(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_flat(cls, values: dict, base: "TrainConfig | None" = None) -> "TrainConfig":
        """Build from flat ``key -> value`` pairs; batch/augment fields may be given bare."""
        base = base or cls()
        top, batch, aug = {}, {}, {}
        batch_keys = {f.name for f in fields(BatchSpec)}
        aug_keys = {f.name for f in fields(AugmentConfig)}
        own = {f.name: f for f in fields(cls)}
        for key, val in values.items():
            if key == "variant" and str(val).strip().lower() == "baseline":
                top.update(alpha=0.0, contrastive=False)
            elif key in batch_keys:
                batch[key] = int(val)
            elif key in aug_keys:
                aug[key] = float(val)
            elif key in own and key not in ("batch", "augment"):
                top[key] = _coerce(val, getattr(base, key))
            else:
                raise ConfigError(f"unknown training config key {key!r}")
        return replace(base, batch=replace(base.batch, **batch),
                       augment=replace(base.augment, **aug), **top)


def _coerce(value, like):
    if not isinstance(value, str):
        return value
    if isinstance(like, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(like, PairVariant):
        return PairVariant.parse(value)
    if isinstance(like, tuple):
        return tuple(int(v) for v in value.replace(",", " ").split())
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def child_seed(seed_seq: np.random.SeedSequence, i: int) -> np.random.SeedSequence:
    """The ``i``-th child of ``seed_seq``; unlike ``spawn`` this is stateless."""
    return np.random.SeedSequence(seed_seq.entropy, spawn_key=(*seed_seq.spawn_key, i),
                                  pool_size=seed_seq.pool_size)


def derive_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    root = np.random.SeedSequence(seed)
    return [child_seed(root, i) for i in range(n)]


def _streams(seed_seq: np.random.SeedSequence):
    # separate streams: disabling view B must not shift any other draw
    return tuple(np.random.default_rng(child_seed(seed_seq, i)) for i in range(4))


def initial_params(input_dim: int, config: "TrainConfig",
                   seed_seq: np.random.SeedSequence) -> EncoderParams:
    return init_encoder(input_dim, config.hidden, config.embed_dim,
                        np.random.default_rng(child_seed(seed_seq, 0)))


@dataclass
class StepResult:
    loss: float
    cls_loss: float
    con_loss: float
    grads: EncoderParams


def joint_step_gradients(params: EncoderParams, x_a, x_b, labels: BatchLabels,
                         config: TrainConfig) -> StepResult:
    """Joint loss and its gradient for one batch of paired views.

    ``x_b`` is ignored when the contrastive branch is disabled.
    """
    y = np.asarray(labels.class_labels, dtype=np.float64)
    z_a, cache_a = mlp_forward(params, x_a)
    cls = binary_cross_entropy(expit(head_forward(params, z_a)), y)

    if config.contrastive:
        u_a = l2_normalize_rows(z_a)
        pairs = build_pairs(config.variant, labels, dual_view=config.dual_view)
        if config.dual_view:
            z_b, cache_b = mlp_forward(params, x_b)
            u_b = l2_normalize_rows(z_b)
        else:
            u_b = u_a
        con = contrastive_loss(u_a, u_b, pairs, config.temperature,
                               config.normalize_positives)
        out = joint_loss(cls, con, JointLossConfig(config.alpha, config.temperature))
        con_value = con.value
    else:
        out, con_value = cls, 0.0

    (head_w, head_b), grad_z_a = head_backward(params, z_a, out.grad_logits)
    if config.contrastive:
        if config.dual_view:
            grad_z_a = grad_z_a + l2_normalize_rows_backward(z_a, out.grad_anchors)
        else:
            grad_z_a = grad_z_a + l2_normalize_rows_backward(
                z_a, out.grad_anchors + out.grad_candidates)
    enc_grads, _ = mlp_backward(params, cache_a, grad_z_a)
    arrays = enc_grads.arrays()
    if config.contrastive and config.dual_view:
        grads_b, _ = mlp_backward(params, cache_b,
                                  l2_normalize_rows_backward(z_b, out.grad_candidates))
        arrays = [ga + gb for ga, gb in zip(arrays, grads_b.arrays())]
    arrays[-2], arrays[-1] = head_w, head_b
    return StepResult(out.value, cls.value, con_value, params.with_arrays(arrays))


def _view_index(records: Sequence[LesionRecord]):
    index, rows, labels = {}, [], {}
    for r in records:
        index[r.lesion_id] = list(range(len(rows), len(rows) + r.n_views))
        rows.extend(r.views)
        labels[r.lesion_id] = r.label
    return index, np.asarray(rows), labels


def train_one_fold(records: Sequence[LesionRecord], config: TrainConfig,
                   seed_seq: np.random.SeedSequence | None = None,
                   callback: Callable | None = None) -> tuple[EncoderParams, list[float]]:
    """Train encoder + head on ``records``; returns params and per-epoch mean joint loss.

    ``callback(epoch, batch, params, step)`` is invoked after every update.
    """
    if len(records) < config.batch.groups_per_batch:
        raise InsufficientDataError(
            f"{len(records)} training lesions, batch needs {config.batch.groups_per_batch}")
    seed_seq = seed_seq if seed_seq is not None else np.random.SeedSequence(config.seed)
    _, rng_sample, rng_a, rng_b = _streams(seed_seq)
    index, X, lesion_label = _view_index(records)

    params = initial_params(X.shape[1], config, seed_seq)
    state = AdamState.zeros_like(params.arrays())
    n_batches = batches_per_epoch(X.shape[0], config.batch)
    curve = []
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config.base_lr, config.lr_decay, config.lr_decay_every)
        total = 0.0
        for b in range(n_batches):
            batch = sample_batch(index, config.batch, rng_sample)
            ids = [lid for lid, _ in batch]
            rows = X[[v for _, v in batch]]
            labels = BatchLabels(ids, [lesion_label[lid] for lid in ids])
            x_a = augment_view(rows, config.augment, rng_a)
            x_b = augment_view(rows, config.augment, rng_b) if config.contrastive else None
            step = joint_step_gradients(params, x_a, x_b, labels, config)
            if not math.isfinite(step.loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b}",
                    {"epoch": epoch, "batch": b, "cls_loss": step.cls_loss,
                     "con_loss": step.con_loss, "lr": lr, "params": params})
            new_arrays, state = adam_step(params.arrays(), step.grads.arrays(), state, lr)
            params = params.with_arrays(new_arrays)
            total += step.loss
            if callback is not None:
                callback(epoch, b, params, step)
        curve.append(total / n_batches)
    return params, curve


def embed(params: EncoderParams, X) -> np.ndarray:
    z, _ = mlp_forward(params, X)
    return z


def predict(params: EncoderParams, X) -> np.ndarray:
    return expit(head_forward(params, embed(params, X)))


@dataclass
class FoldResult:
    fold: int
    metrics: dict
    knn: list
    loss_curve: list
    train_lesions: int
    test_lesions: int


@dataclass
class RunResult:
    config: dict
    fold_count: int
    folds: list
    mean: dict
    std: dict
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)


def _summarize(folds: list[FoldResult]):
    mean, std = {}, {}
    for key in REPORT_KEYS:
        vals = [f.metrics[key] for f in folds if f.metrics[key] is not None]
        mean[key] = float(np.mean(vals)) if vals else None
        std[key] = float(np.std(vals)) if vals else None
    ks = sorted({k for f in folds for k, _ in f.knn})
    for k in ks:
        vals = [a for f in folds for kk, a in f.knn if kk == k]
        mean[f"knn_auc@{k}"] = float(np.mean(vals))
        std[f"knn_auc@{k}"] = float(np.std(vals))
    return mean, std


def split_records(records, split_assignment, fold):
    train = [r for r in records if split_assignment[r.lesion_id] != fold]
    test = [r for r in records if split_assignment[r.lesion_id] == fold]
    return train, test


def run_fold(records, split_assignment, fold, config, seed_seq) -> FoldResult:
    """Train on every fold but ``fold``; the KNN reference set is the training
    folds' unaugmented embeddings, queried with the holdout's."""
    train, test = split_records(records, split_assignment, fold)
    params, curve = train_one_fold(train, config, seed_seq)

    X_test, y_test, ids_test = flatten(test)
    report = evaluate_predictions(predict(params, X_test), y_test, ids_test, config.threshold)

    X_train, y_train, _ = flatten(train)
    ref = l2_normalize_rows(embed(params, X_train))
    queries = l2_normalize_rows(embed(params, X_test))
    ks = [k for k in config.knn_ks if k <= ref.shape[0]]
    knn = [list(p) for p in knn_auc_sweep(ref, y_train, queries, y_test, ks,
                                          config.knn_temperature)]
    return FoldResult(fold, report.to_dict(), knn, curve, len(train), len(test))


def cross_validate(records: Sequence[LesionRecord], config: TrainConfig,
                   fold_count: int = 5, jobs: int = 1) -> RunResult:
    """Lesion-level k-fold CV: train on k-1 folds, evaluate on the holdout."""
    if fold_count < 2:
        raise ConfigError("cross-validation needs at least 2 folds")
    seeds = derive_seeds(config.seed, fold_count + 1)
    split = kfold_split([r.lesion_id for r in records], fold_count,
                        np.random.default_rng(seeds[0]))
    args = [(list(records), split.assignment, f, config, seeds[f + 1])
            for f in range(fold_count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(run_fold, *zip(*args)))
    else:
        folds = [run_fold(*a) for a in args]
    mean, std = _summarize(folds)
    notes = ["in-batch negatives only; no memory bank or cross-batch negatives"]
    return RunResult(config.echo(), fold_count, [asdict(f) for f in folds], mean, std, notes)


ABLATION_AXES = ("negatives", "alpha", "task")
NEGATIVE_ROWS = (PairVariant.LR_MINUS_ALL, PairVariant.LR_MINUS_SC,
                 PairVariant.LR_MINUS_DC, PairVariant.LR)
ALPHA_GRID = (0.1, 0.2, 0.5, 1.0)


def ablation_settings(axis: str, base: TrainConfig, values=None) -> list[tuple[str, TrainConfig]]:
    if axis == "negatives":
        variants = [PairVariant.parse(v) if isinstance(v, str) else PairVariant(v)
                    for v in (values or NEGATIVE_ROWS)]
        return [(v.value, replace(base, variant=v, contrastive=True)) for v in variants]
    if axis == "alpha":
        return [(f"{float(a):g}", replace(base, alpha=float(a), contrastive=True))
                for a in (values or ALPHA_GRID)]
    if axis == "task":
        out = []
        for name in (values or ("baseline", "IR", "LR")):
            if name == "baseline":
                out.append(("baseline", replace(base, alpha=0.0, contrastive=False)))
            else:
                out.append((name, replace(base, variant=PairVariant.parse(name),
                                          contrastive=True)))
        return out
    raise ConfigError(f"unknown ablation axis {axis!r}; choose from {ABLATION_AXES}")


@dataclass
class AblationTable:
    axis: str
    rows: list  # (label, RunResult)

    def to_dict(self) -> dict:
        return {"axis": self.axis,
                "rows": [{"label": lab, "result": res.to_dict()} for lab, res in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def format(self, keys: Sequence[str] = METRIC_KEYS) -> str:
        return format_table(self.axis, self.rows, keys)


def format_table(title: str, rows, keys: Sequence[str] = METRIC_KEYS) -> str:
    """Aligned text table, ``mean±std`` in percent."""
    header = [title] + [k.upper() if len(k) <= 3 else k.capitalize() for k in keys]
    body = []
    for label, res in rows:
        cells = [label]
        for k in keys:
            m, s = res.mean.get(k), res.std.get(k)
            cells.append("n/a" if m is None else f"{100 * m:.1f}±{100 * s:.1f}")
        body.append(cells)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    line = lambda r: " | ".join(c.ljust(w) for c, w in zip(r, widths))
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), sep] + [line(r) for r in body]) + "\n"


def run_ablation(records: Sequence[LesionRecord], base_config: TrainConfig, axis: str,
                 values=None, fold_count: int = 5, jobs: int = 1) -> AblationTable:
    settings = ablation_settings(axis, base_config, values)
    rows = [(label, cross_validate(records, cfg, fold_count, jobs)) for label, cfg in settings]
    return AblationTable(axis, rows)

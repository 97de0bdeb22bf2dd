"""Lesion records: synthetic multi-view generation, vector augmentation and
manifest-based storage of precomputed feature vectors.

On disk a dataset is a UTF-8 CSV manifest with header
``lesion_id,label,feature_path`` and one feature file per row. Feature files
are either text (one whitespace-separated row of reals per view) or binary:
``b"MVC1"``, little-endian u32 view count, u32 dim, then float64 values.
"""
from __future__ import annotations

import csv
import hashlib
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, DataIntegrityError

MAGIC = b"MVC1"
MANIFEST_NAME = "manifest.csv"
BENIGN, MALIGNANT = 0, 1


@dataclass(frozen=True, eq=False)
class LesionRecord:
    lesion_id: str
    label: int
    views: np.ndarray  # (n_views, view_dim)

    def __post_init__(self):
        v = np.asarray(self.views, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise DataIntegrityError(f"lesion {self.lesion_id!r} needs a (n_views, dim) array")
        if self.label not in (BENIGN, MALIGNANT):
            raise DataIntegrityError(f"lesion {self.lesion_id!r} has label {self.label!r}")
        object.__setattr__(self, "views", v)

    def __eq__(self, other):
        if not isinstance(other, LesionRecord):
            return NotImplemented
        return (self.lesion_id == other.lesion_id and self.label == other.label
                and self.views.shape == other.views.shape
                and self.views.tobytes() == other.views.tobytes())

    @property
    def n_views(self) -> int:
        return self.views.shape[0]


@dataclass(frozen=True)
class SynthConfig:
    latent_dim: int = 8
    view_dim: int = 32
    class_separation: float = 6.0
    view_noise_sigma: float = 0.5
    lesions_per_class: int | tuple[int, int] = 100  # int, or (benign, malignant)
    views_per_lesion: tuple[int, int] = (2, 6)
    max_view_angle: float = np.pi / 4
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.views_per_lesion
        if self.latent_dim < 1 or self.view_dim < 1:
            raise ConfigError("dims must be >= 1")
        if self.view_dim < self.latent_dim:
            raise ConfigError("view_dim must be >= latent_dim")
        if self.class_separation < 0 or self.view_noise_sigma < 0 or self.max_view_angle < 0:
            raise ConfigError("separation, sigma and max_view_angle must be >= 0")
        if not 1 <= lo <= hi:
            raise ConfigError("views_per_lesion must satisfy 1 <= min <= max")
        if min(self.class_counts) < 0:
            raise ConfigError("lesions_per_class must be >= 0")

    @property
    def class_counts(self) -> tuple[int, int]:
        lpc = self.lesions_per_class
        return (lpc, lpc) if isinstance(lpc, (int, np.integer)) else tuple(lpc)


@dataclass(frozen=True)
class AugmentConfig:
    noise_sigma: float = 0.1
    dropout_prob: float = 0.1

    def __post_init__(self):
        if self.noise_sigma < 0 or not 0.0 <= self.dropout_prob <= 1.0:
            raise ConfigError("noise_sigma >= 0 and dropout_prob in [0, 1] required")


def random_view_rotation(dim: int, max_angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotation ``expm(theta * A)`` for a random skew-symmetric ``A`` of unit
    spectral norm and ``theta ~ U(0, max_angle)``; no plane turns by more than
    ``max_angle``."""
    g = rng.normal(size=(dim, dim))
    skew = g - g.T
    norm = np.linalg.norm(skew, 2)
    theta = rng.uniform(0.0, max_angle)
    if dim == 1 or norm == 0.0:
        return np.eye(dim)
    return expm(theta * skew / norm)


def generate_synthetic(config: SynthConfig) -> list[LesionRecord]:
    """Each lesion draws a latent ``u ~ N(mu_class, I)``; each view is
    ``E @ R @ u + noise`` with ``E`` a fixed orthonormal embedding into
    ``view_dim`` and ``R`` a fresh bounded-angle rotation."""
    rng = np.random.default_rng(config.seed)
    L, D = config.latent_dim, config.view_dim
    direction = rng.normal(size=L)
    direction /= np.linalg.norm(direction)
    means = {BENIGN: -0.5 * config.class_separation * direction,
             MALIGNANT: 0.5 * config.class_separation * direction}
    embed, _ = np.linalg.qr(rng.normal(size=(D, L)))
    lo, hi = config.views_per_lesion

    records = []
    for label, count in zip((BENIGN, MALIGNANT), config.class_counts):
        for i in range(count):
            u = means[label] + rng.normal(size=L)
            n_views = int(rng.integers(lo, hi + 1))
            views = np.empty((n_views, D))
            for v in range(n_views):
                R = random_view_rotation(L, config.max_view_angle, rng)
                views[v] = embed @ (R @ u) + config.view_noise_sigma * rng.normal(size=D)
            records.append(LesionRecord(f"{'BM'[label]}{i:05d}", label, views))
    return records


def augment_view(v, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """``mask * (v + noise)``; works row-wise on a matrix of views as well."""
    v = np.asarray(v, dtype=np.float64)
    noisy = v + config.noise_sigma * rng.normal(size=v.shape)
    keep = rng.random(size=v.shape) >= config.dropout_prob
    return np.where(keep, noisy, 0.0)


def flatten(records: Sequence[LesionRecord]):
    """Stack all views: returns ``(X, labels, lesion_ids)`` aligned by row."""
    X = np.concatenate([r.views for r in records], axis=0)
    labels = np.concatenate([np.full(r.n_views, r.label) for r in records])
    ids = [r.lesion_id for r in records for _ in range(r.n_views)]
    return X, labels, ids


def fingerprint(records: Iterable[LesionRecord]) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update(f"{r.lesion_id}\x00{r.label}\x00{r.views.shape}".encode())
        h.update(np.ascontiguousarray(r.views, dtype="<f8").tobytes())
    return h.hexdigest()


# -- feature files ----------------------------------------------------------

def write_features(path, views, fmt: str = "binary") -> None:
    views = np.asarray(views, dtype=np.float64)
    path = Path(path)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<II", *views.shape))
            fh.write(np.ascontiguousarray(views, dtype="<f8").tobytes())
    elif fmt == "text":
        # repr() is the shortest round-tripping decimal form
        with open(path, "w", encoding="utf-8") as fh:
            for row in views:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    else:
        raise ConfigError(f"unknown feature format {fmt!r}")


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] == MAGIC:
        n, d = struct.unpack("<II", raw[4:12])
        body = raw[12:]
        if len(body) != 8 * n * d:
            raise DataIntegrityError(f"{path}: expected {n}x{d} float64 values")
        return np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(n, d)
    rows = [line.split() for line in raw.decode("utf-8").splitlines() if line.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise DataIntegrityError(f"{path}: ragged or empty feature rows")
    return np.array([[float(x) for x in r] for r in rows], dtype=np.float64)


def save_dataset(records: Sequence[LesionRecord], out_dir, fmt: str = "binary") -> Path:
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    ext = ".mvc" if fmt == "binary" else ".txt"
    manifest = out / MANIFEST_NAME
    with open(manifest, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lesion_id", "label", "feature_path"])
        for r in records:
            rel = f"features/{r.lesion_id}{ext}"
            write_features(out / rel, r.views, fmt)
            w.writerow([r.lesion_id, r.label, rel])
    return manifest


def load_manifest(path) -> list[LesionRecord]:
    """Group manifest rows by lesion id; several rows may share a lesion."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    grouped: OrderedDict[str, tuple[int, list]] = OrderedDict()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"lesion_id", "label", "feature_path"} - set(reader.fieldnames or ())
        if missing:
            raise DataIntegrityError(f"{path}: manifest lacks columns {sorted(missing)}")
        for row in reader:
            lid = row["lesion_id"]
            try:
                label = int(row["label"])
            except ValueError:
                raise DataIntegrityError(f"lesion {lid!r}: label {row['label']!r} is not 0/1")
            if label not in (BENIGN, MALIGNANT):
                raise DataIntegrityError(f"lesion {lid!r}: label {label} is not 0/1")
            feat = Path(row["feature_path"])
            if not feat.is_absolute():
                feat = path.parent / feat
            if not feat.exists():
                raise FileNotFoundError(f"feature file {feat} for lesion {lid!r} not found")
            prev = grouped.setdefault(lid, (label, []))
            if prev[0] != label:
                raise DataIntegrityError(f"lesion {lid!r} labelled both {prev[0]} and {label}")
            prev[1].append(read_features(feat))
    records = []
    for lid, (label, chunks) in grouped.items():
        if len({c.shape[1] for c in chunks}) != 1:
            raise DataIntegrityError(f"lesion {lid!r} has views of differing dimension")
        records.append(LesionRecord(lid, label, np.concatenate(chunks, axis=0)))
    return records

"""Dataset CSV round-trip and seeded synthetic generators.

CSV layout is one header row ``feature0,...,featureN,label`` and one sample
per line.  Classification labels are integers; the regression generator
emits per-sample target vectors in the feature columns with label 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, f) float64
    labels: np.ndarray  # (n,) int64

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n_samples else 0


def make_blobs(
    n_samples: int,
    n_features: int,
    n_classes: int,
    separation: float,
    noise: float,
    seed: int,
) -> Dataset:
    """Gaussian class blobs with seeded means; labels cycle 0..k-1."""
    if n_samples <= 0:
        raise ValueError("need at least one sample")
    if n_classes < 2 or n_features < 1:
        raise ValueError("need >= 2 classes and >= 1 feature")
    rng = np.random.default_rng(np.random.SeedSequence([seed, n_classes, n_features]))
    means = rng.normal(size=(n_classes, n_features))
    means *= separation / np.maximum(np.linalg.norm(means, axis=1, keepdims=True), 1e-12)
    labels = np.arange(n_samples, dtype=np.int64) % n_classes
    feats = means[labels] + noise * rng.normal(size=(n_samples, n_features))
    return Dataset(feats, labels)


def make_linear_targets(
    n_samples: int, dim: int, spread: float, noise: float, seed: int
) -> Dataset:
    """Per-sample target vectors around a seeded center, for the quadratic."""
    if n_samples <= 0:
        raise ValueError("need at least one sample")
    if dim < 1:
        raise ValueError("need dimension >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, dim]))
    center = spread * rng.normal(size=dim)
    targets = center + noise * rng.normal(size=(n_samples, dim))
    return Dataset(targets, np.zeros(n_samples, dtype=np.int64))


def save_csv(path: str | Path, ds: Dataset) -> None:
    cols = [f"feature{i}" for i in range(ds.n_features)] + ["label"]
    lines = [",".join(cols)]
    for row, label in zip(ds.features, ds.labels):
        lines.append(",".join([repr(float(v)) for v in row] + [str(int(label))]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_csv(path: str | Path) -> Dataset:
    text = Path(path).read_text().strip().splitlines()
    if len(text) < 2:
        raise ValueError(f"{path}: no samples")
    header = text[0].split(",")
    if header[-1] != "label" or any(
        c != f"feature{i}" for i, c in enumerate(header[:-1])
    ):
        raise ValueError(f"{path}: unexpected header {header!r}")
    n_feat = len(header) - 1
    feats = np.empty((len(text) - 1, n_feat), dtype=np.float64)
    labels = np.empty(len(text) - 1, dtype=np.int64)
    for i, line in enumerate(text[1:]):
        parts = line.split(",")
        if len(parts) != n_feat + 1:
            raise ValueError(f"{path}: row {i + 1} has {len(parts)} columns")
        feats[i] = [float(p) for p in parts[:-1]]
        labels[i] = int(parts[-1])
    return Dataset(feats, labels)

"""Pixel-sample datasets: CSV ingestion, synthetic clusters, label flips, splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .sim import make_rng


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.array(self.features, dtype=float, copy=True)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise DataError("features must be an N x D matrix")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DataError(f"{x.shape[0]} feature rows but {y.size} labels")
        if not np.isfinite(x).all():
            raise DataError("features contain non-finite values")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        y = y.astype(np.int64)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return self.labels.size

    @property
    def n_features(self):
        return self.features.shape[1]

    def class_counts(self):
        return int((self.labels == 0).sum()), int((self.labels == 1).sum())

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.features[idx], self.labels[idx], self.meta)


def load_csv(path, has_header=None):
    """Read rows of ``D`` features followed by a 0/1 label.

    ``has_header=None`` sniffs the first row: it is a header when any field
    fails to parse as a number.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            rows.append((lineno, row))
    if has_header is None and rows:
        has_header = not all(_is_number(c) for c in rows[0][1])
    if has_header:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    if width < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")
    feats = np.empty((len(rows), width - 1))
    labels = np.empty(len(rows), dtype=np.int64)
    for i, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {lineno}, column {j + 1}: cannot parse {cell!r}") from None
            if not np.isfinite(v):
                raise DataError(f"{path}: row {lineno}, column {j + 1}: non-finite value {cell!r}")
            if j < width - 1:
                feats[i, j] = v
            elif v not in (0.0, 1.0):
                raise DataError(f"{path}: row {lineno}: label {cell!r} is not 0 or 1")
            else:
                labels[i] = int(v)
    return Dataset(feats, labels, {"source": str(path)})


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_csv(dataset, path, header=True):
    """Write features with 17 significant digits so reloading is bit-exact."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"f{j}" for j in range(dataset.n_features)] + ["label"])
        for x, y in zip(dataset.features, dataset.labels):
            w.writerow([f"{v:.17g}" for v in x] + [str(int(y))])


def synthesize(n, dims, separation, seed=0):
    """Two unit-variance Gaussian clusters at ``+-separation/2`` along a random unit vector."""
    n, dims = int(n), int(dims)
    if n < 2 or n % 2:
        raise DataError("n must be an even number >= 2")
    if dims < 1:
        raise DataError("dims must be >= 1")
    if not np.isfinite(separation) or separation < 0:
        raise DataError("separation must be a finite non-negative number")
    rng = make_rng(seed)
    direction = rng.normal(size=dims)
    direction /= np.linalg.norm(direction)
    half = n // 2
    labels = np.repeat([0, 1], half)
    centers = np.where(labels[:, None] == 1, 1.0, -1.0) * (separation / 2) * direction
    feats = centers + rng.normal(size=(n, dims))
    order = rng.permutation(n)
    meta = {"source": "synthetic", "n": n, "dims": dims, "separation": float(separation), "seed": seed}
    return Dataset(feats[order], labels[order], meta)


def flip_labels(dataset):
    return Dataset(dataset.features, 1 - dataset.labels, dataset.meta)


def split(dataset, train_fraction, seed=0):
    """Stratified seeded split into ``(train, test)``."""
    if not 0 < train_fraction < 1:
        raise DataError("train_fraction must lie strictly between 0 and 1")
    rng = make_rng(seed)
    train_idx, test_idx = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(dataset.labels == cls)
        idx = idx[rng.permutation(idx.size)]
        k = int(round(train_fraction * idx.size))
        train_idx.append(idx[:k])
        test_idx.append(idx[k:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    if train_idx.size == 0 or test_idx.size == 0:
        raise DataError(f"train_fraction {train_fraction} leaves one side of the split empty")
    # mix the classes again so batches are not class-sorted
    train_idx = train_idx[rng.permutation(train_idx.size)]
    test_idx = test_idx[rng.permutation(test_idx.size)]
    return dataset.subset(train_idx), dataset.subset(test_idx)

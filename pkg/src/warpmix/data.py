"""Tabular dataset ingestion, splitting, and normalization."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DatasetError, UsageError
from .rng import RngStream

__all__ = ["Dataset", "Normalization", "DataSplits", "load_csv", "split"]

_STD_FLOOR = 1e-8


@dataclass
class Dataset:
    """Feature matrix plus targets; ``num_classes`` is None for regression."""

    features: np.ndarray
    targets: np.ndarray
    name: str = ""
    num_classes: Optional[int] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise UsageError(f"features must be (N, d), got shape {self.features.shape}")
        if self.num_classes is None:
            self.targets = np.asarray(self.targets, dtype=np.float64)
        else:
            self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.targets.shape[0] != self.features.shape[0]:
            raise UsageError("features and targets row counts differ")

    def __len__(self):
        return self.features.shape[0]


@dataclass
class Normalization:
    """Train-split statistics: feature z-scoring plus target z-scoring.

    Target statistics are identity (0, 1) for classification.
    """

    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0

    def apply_features(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_mean) / self.feature_std

    def normalize_targets(self, y: np.ndarray) -> np.ndarray:
        return (y - self.target_mean) / self.target_std

    def denormalize_mean(self, mean: np.ndarray) -> np.ndarray:
        return mean * self.target_std + self.target_mean

    def denormalize_variance(self, variance: np.ndarray) -> np.ndarray:
        return variance * self.target_std**2


@dataclass
class DataSplits:
    train: Dataset
    valid: Dataset
    test: Dataset
    normalization: Normalization


def load_csv(path, target_column: Union[int, str] = -1, name: str = "") -> Dataset:
    """Parse a headered numeric CSV into a regression Dataset.

    The target column is named or indexed (negative indices allowed); all
    other columns become features in file order. Any non-numeric cell is an
    error naming the offending data row (1-based, header excluded).
    """
    if not os.path.isfile(path):
        raise DatasetError(f"dataset file not found: {path}", code="missing_file")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise DatasetError(f"dataset file is empty: {path}", code="empty_dataset")
    header, data_rows = rows[0], rows[1:]
    if not data_rows:
        raise DatasetError(f"no data rows after the header: {path}", code="empty_dataset")

    if isinstance(target_column, str):
        stripped = [h.strip() for h in header]
        if target_column not in stripped:
            raise DatasetError(
                f"target column {target_column!r} not in header {stripped}", code="bad_header"
            )
        target_idx = stripped.index(target_column)
    else:
        target_idx = int(target_column) % len(header)

    parsed = np.empty((len(data_rows), len(header)), dtype=np.float64)
    for r, row in enumerate(data_rows, start=1):
        if len(row) != len(header):
            raise DatasetError(
                f"row {r} has {len(row)} cells, header has {len(header)}",
                code="non_numeric_cell",
            )
        for c, cell in enumerate(row):
            try:
                parsed[r - 1, c] = float(cell)
            except ValueError:
                raise DatasetError(
                    f"non-numeric cell {cell!r} at row {r}, column {header[c].strip()!r}",
                    code="non_numeric_cell",
                ) from None

    feature_cols = [c for c in range(len(header)) if c != target_idx]
    return Dataset(
        features=parsed[:, feature_cols],
        targets=parsed[:, target_idx],
        name=name or os.path.splitext(os.path.basename(path))[0],
    )


def split(dataset: Dataset, fractions, seed: int) -> DataSplits:
    """Seeded disjoint train/valid/test partition with fitted normalization.

    Sizes follow a fixed rounding rule: valid and test get the floor of
    their fractions, train gets the remainder. Feature statistics (and
    target statistics, for regression) come from the train rows only and are
    applied to every split's features; targets are left raw, with the
    statistics carried in the returned Normalization.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0.0 for f in fractions):
        raise UsageError(f"fractions must be 3 positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError(f"fractions must sum to 1, got {fractions} (sum {sum(fractions)})")

    n = len(dataset)
    n_valid = int(n * fractions[1])
    n_test = int(n * fractions[2])
    n_train = n - n_valid - n_test
    if min(n_train, n_valid, n_test) < 1:
        raise UsageError(
            f"split of {n} rows into {fractions} leaves an empty part "
            f"(sizes {n_train}, {n_valid}, {n_test})"
        )

    order = RngStream(seed).permutation(n)
    train_idx = order[:n_train]
    valid_idx = order[n_train : n_train + n_valid]
    test_idx = order[n_train + n_valid :]

    train_x = dataset.features[train_idx]
    mean = train_x.mean(axis=0)
    std = np.maximum(train_x.std(axis=0), _STD_FLOOR)
    if dataset.num_classes is None:
        t = dataset.targets[train_idx]
        norm = Normalization(mean, std, float(t.mean()), max(float(t.std()), _STD_FLOOR))
    else:
        norm = Normalization(mean, std)

    def _part(idx):
        return Dataset(
            features=norm.apply_features(dataset.features[idx]),
            targets=dataset.targets[idx],
            name=dataset.name,
            num_classes=dataset.num_classes,
        )

    return DataSplits(train=_part(train_idx), valid=_part(valid_idx), test=_part(test_idx), normalization=norm)

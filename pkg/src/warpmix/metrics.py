"""Calibration and accuracy metrics, plus temperature scaling.

Classification metrics consume lists of per-sample ClassifPrediction;
regression calibration consumes lists of per-sample PredictiveDistribution.
Binning follows one documented rule everywhere: equal-width bins, a value
exactly on an interior edge goes to the higher bin, and the top bin is
closed. ENCE averages over non-empty bins only; a bin whose root mean
variance is zero yields the infinity sentinel unless its RMSE is also zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import UsageError

__all__ = [
    "ClassifPrediction",
    "PredictiveDistribution",
    "BinningConfig",
    "softmax",
    "log_softmax",
    "accuracy",
    "ece",
    "brier",
    "nll",
    "uce",
    "ence",
    "temperature_scale",
    "regression_point_metrics",
]

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ClassifPrediction:
    """One classified sample: a probability vector and its true label."""

    probs: np.ndarray
    label: int

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.shape[0] < 2:
            raise UsageError(f"probs must be a vector over >= 2 classes, got shape {p.shape}")
        if np.any(p < 0.0) or np.any(p > 1.0) or abs(float(p.sum()) - 1.0) > 1e-9:
            raise UsageError("probs must be non-negative and sum to 1 within 1e-9")
        label = int(self.label)
        if not 0 <= label < p.shape[0]:
            raise UsageError(f"label {label} outside [0, {p.shape[0]})")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "label", label)


@dataclass(frozen=True)
class PredictiveDistribution:
    """One regression prediction: mean and variance against a true target."""

    mean: float
    variance: float
    target: float

    def __post_init__(self):
        v = float(self.variance)
        if math.isnan(v) or v < 0.0:
            raise UsageError(f"variance must be >= 0, got {self.variance}")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", v)
        object.__setattr__(self, "target", float(self.target))


@dataclass(frozen=True)
class BinningConfig:
    """Equal-width binning: how many bins, and over which quantity."""

    num_bins: int = 15
    scheme: Optional[str] = None  # None = whatever the metric requires

    _SCHEMES = ("equal_width_confidence", "equal_width_variance")

    def __post_init__(self):
        m = int(self.num_bins)
        if m < 1:
            raise UsageError(f"num_bins must be >= 1, got {self.num_bins}")
        object.__setattr__(self, "num_bins", m)
        if self.scheme is not None and self.scheme not in self._SCHEMES:
            raise UsageError(f"unknown binning scheme {self.scheme!r}")

    def _require(self, scheme: str) -> int:
        if self.scheme is not None and self.scheme != scheme:
            raise UsageError(f"binning scheme {self.scheme!r} cannot drive a {scheme} metric")
        return self.num_bins


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _classif_arrays(preds: Sequence[ClassifPrediction]):
    if len(preds) == 0:
        raise UsageError("metric needs at least one prediction")
    probs = np.stack([p.probs for p in preds])
    labels = np.array([p.label for p in preds], dtype=np.int64)
    return probs, labels


def _regression_arrays(preds: Sequence[PredictiveDistribution]):
    if len(preds) == 0:
        raise UsageError("metric needs at least one prediction")
    means = np.array([p.mean for p in preds], dtype=np.float64)
    variances = np.array([p.variance for p in preds], dtype=np.float64)
    targets = np.array([p.target for p in preds], dtype=np.float64)
    return means, variances, targets


def accuracy(preds: Sequence[ClassifPrediction]) -> float:
    probs, labels = _classif_arrays(preds)
    return float(np.mean(probs.argmax(axis=1) == labels))


def _bin_index(values: np.ndarray, lo: float, hi: float, num_bins: int) -> np.ndarray:
    """Equal-width bin of each value over [lo, hi]; edge values go up."""
    if hi <= lo:
        return np.zeros(values.shape[0], dtype=np.int64)
    idx = np.floor((values - lo) / (hi - lo) * num_bins).astype(np.int64)
    return np.clip(idx, 0, num_bins - 1)


def ece(preds: Sequence[ClassifPrediction], bins: Optional[BinningConfig] = None) -> float:
    """Expected calibration error over equal-width confidence bins on [0, 1]."""
    bins = bins or BinningConfig(scheme="equal_width_confidence")
    m = bins._require("equal_width_confidence")
    probs, labels = _classif_arrays(preds)
    conf = probs.max(axis=1)
    correct = probs.argmax(axis=1) == labels
    idx = _bin_index(conf, 0.0, 1.0, m)
    n = conf.shape[0]
    total = 0.0
    for b in range(m):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        gap = abs(float(correct[mask].mean()) - float(conf[mask].mean()))
        total += count / n * gap
    return total


def brier(preds: Sequence[ClassifPrediction]) -> float:
    """Mean squared error between probability vectors and one-hot targets."""
    probs, labels = _classif_arrays(preds)
    onehot = np.zeros_like(probs)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    return float(np.mean(np.sum((probs - onehot) ** 2, axis=1)))


def nll(preds: Sequence[ClassifPrediction]) -> float:
    """Mean negative log-likelihood; probabilities floored at 1e-12."""
    probs, labels = _classif_arrays(preds)
    p = np.clip(probs[np.arange(labels.shape[0]), labels], _PROB_FLOOR, None)
    return float(-np.mean(np.log(p)))


def uce(preds: Sequence[PredictiveDistribution], bins: Optional[BinningConfig] = None) -> float:
    """Bin-weighted gap between mean squared error and mean predicted variance.

    Binned by predicted variance, equal width over [min, max] of the
    observed variances.
    """
    bins = bins or BinningConfig(scheme="equal_width_variance")
    m = bins._require("equal_width_variance")
    means, variances, targets = _regression_arrays(preds)
    sq_err = (means - targets) ** 2
    idx = _bin_index(variances, float(variances.min()), float(variances.max()), m)
    n = variances.shape[0]
    total = 0.0
    for b in range(m):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        gap = abs(float(sq_err[mask].mean()) - float(variances[mask].mean()))
        total += count / n * gap
    return total


def ence(preds: Sequence[PredictiveDistribution], bins: Optional[BinningConfig] = None) -> float:
    """Per-bin normalized gap between RMSE and root mean variance.

    Averages |RMSE - RMV| / RMV over non-empty bins. A bin with RMV = 0 and
    RMSE > 0 makes the metric infinity; RMV = 0 with RMSE = 0 contributes 0.
    """
    bins = bins or BinningConfig(scheme="equal_width_variance")
    m = bins._require("equal_width_variance")
    means, variances, targets = _regression_arrays(preds)
    sq_err = (means - targets) ** 2
    idx = _bin_index(variances, float(variances.min()), float(variances.max()), m)
    total = 0.0
    occupied = 0
    for b in range(m):
        mask = idx == b
        if not mask.any():
            continue
        occupied += 1
        rmse = math.sqrt(float(sq_err[mask].mean()))
        rmv = math.sqrt(float(variances[mask].mean()))
        if rmv == 0.0:
            if rmse == 0.0:
                continue
            return math.inf
        total += abs(rmse - rmv) / rmv
    return total / occupied


def _nll_at_temperature(logits: np.ndarray, labels: np.ndarray, temperature: float) -> float:
    logp = log_softmax(logits / temperature)
    return float(-np.mean(logp[np.arange(labels.shape[0]), labels]))


_T_LO, _T_HI = 0.05, 20.0
_T_GRID = 200
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def temperature_scale(logits, labels) -> float:
    """Temperature minimizing validation NLL of softmax(logits / T).

    Coarse geometric grid over [0.05, 20], then golden-section refinement of
    the best bracket to relative width 1e-4. Dividing by a positive scalar
    never reorders a row, so predicted classes are unchanged for any T.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise UsageError(f"logits must be a non-empty (n, c) array, got shape {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise UsageError("labels must align with logits rows")

    grid = np.geomspace(_T_LO, _T_HI, _T_GRID)
    losses = [_nll_at_temperature(logits, labels, t) for t in grid]
    best = int(np.argmin(losses))
    lo = grid[max(0, best - 1)]
    hi = grid[min(_T_GRID - 1, best + 1)]

    # golden-section shrink of [lo, hi]
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1 = _nll_at_temperature(logits, labels, x1)
    f2 = _nll_at_temperature(logits, labels, x2)
    while (hi - lo) > 1e-4 * (0.5 * (lo + hi)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = _nll_at_temperature(logits, labels, x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = _nll_at_temperature(logits, labels, x2)
    return float(0.5 * (lo + hi))


def regression_point_metrics(preds: Sequence[PredictiveDistribution]):
    """(rmse, mape): root mean squared error and mean absolute percentage error.

    MAPE is returned as None when any target is exactly zero (the ratio is
    undefined there); RMSE is always returned.
    """
    means, _, targets = _regression_arrays(preds)
    rmse = math.sqrt(float(np.mean((means - targets) ** 2)))
    if np.any(targets == 0.0):
        return rmse, None
    mape = 100.0 * float(np.mean(np.abs(means - targets) / np.abs(targets)))
    return rmse, mape

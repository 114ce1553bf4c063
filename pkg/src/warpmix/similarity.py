"""Similarity-dependent warp strengths.

Each sample in a batch is paired with its image under a permutation. The
squared distance between the two, normalized by the batch mean of such
distances, measures how dissimilar the pair is; an exponential kernel then
turns that into a warp strength. Close pairs get small strengths, so their
coefficients are pulled toward 0.5 and the pair blends thoroughly; distant
pairs get large strengths, so their coefficients are pushed toward the
endpoints and each sample stays close to itself. The strength grows
monotonically with normalized distance and an exactly average pair maps to
1 / tau_max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError
from .special import SHAPE_MAX, SHAPE_MIN
from .warping import WarpParam

__all__ = [
    "FEATURE_BACKENDS",
    "KernelConfig",
    "normalized_distances",
    "kernel_tau",
    "batch_taus",
    "extract_features",
]

FEATURE_BACKENDS = ("raw_input", "embedding", "class_weight", "label")

# Below this batch-mean squared distance the batch is treated as degenerate
# (all points coincide) and every pair is assigned the average distance 1.
_DEGENERATE_MEAN = 1e-12


@dataclass(frozen=True)
class KernelConfig:
    """Distance-to-strength kernel settings.

    ``tau_max`` scales the overall strength (an average-distance pair gets
    1 / tau_max), ``tau_std`` controls how fast strength varies with
    distance, and ``backend`` names the feature space distances are taken in.
    """

    tau_max: float
    tau_std: float
    backend: str = "raw_input"

    def __post_init__(self):
        for name in ("tau_max", "tau_std"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0.0:
                raise DomainError(f"{name} must be a positive finite number, got {v}")
            object.__setattr__(self, name, v)
        if self.backend not in FEATURE_BACKENDS:
            raise UsageError(
                f"unknown feature backend {self.backend!r}; expected one of {FEATURE_BACKENDS}"
            )


def normalized_distances(points, permutation) -> np.ndarray:
    """Squared pair distances divided by their batch mean.

    ``points`` is (n, d) (a 1-d array is treated as n scalars) and
    ``permutation`` pairs row i with row permutation[i]. The result always
    has mean exactly 1 by construction, except for a degenerate batch where
    all pairs coincide, which maps to all ones.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
        raise UsageError(f"points must be a non-empty (n, d) array, got shape {points.shape}")
    n = points.shape[0]
    perm = np.asarray(permutation)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise UsageError("permutation must be a permutation of range(n)")

    diffs = points - points[perm]
    raw = np.einsum("ij,ij->i", diffs, diffs)
    mean = float(raw.mean())
    if mean < _DEGENERATE_MEAN:
        return np.ones(n, dtype=np.float64)
    return raw / mean


def kernel_tau(norm_distance, config: KernelConfig) -> float:
    """Warp strength for one normalized pair distance.

    exp((d - 1) / (2 std^2)) / amplitude, clamped to the shape-parameter
    range accepted by the warping functions. An average pair (d = 1) maps
    exactly to 1 / tau_max.
    """
    d = float(norm_distance)
    if math.isnan(d) or math.isinf(d) or d < 0.0:
        raise DomainError(f"normalized distance must be finite and >= 0, got {d}")
    arg = (d - 1.0) / (2.0 * config.tau_std**2)
    if arg > 700.0:  # exp would overflow; the clamp below saturates anyway
        return SHAPE_MAX
    t = math.exp(arg) / config.tau_max
    return min(SHAPE_MAX, max(SHAPE_MIN, t))


def batch_taus(features, permutation, config: KernelConfig) -> list[WarpParam]:
    """Per-sample warp strengths for a batch of feature vectors."""
    dists = normalized_distances(features, permutation)
    return [WarpParam.finite(kernel_tau(d, config)) for d in dists]


def extract_features(batch, backend: str, model=None) -> np.ndarray:
    """Feature vectors used for pair distances, per backend.

    raw_input: the batch inputs as-is.
    embedding: penultimate-layer activations of ``model`` at its current
        parameters (no dropout, no gradients).
    class_weight: the final-layer weight column of each sample's label class,
        so two samples are close when their classes look alike to the model.
    label: the regression targets themselves.
    """
    if backend not in FEATURE_BACKENDS:
        raise UsageError(
            f"unknown feature backend {backend!r}; expected one of {FEATURE_BACKENDS}"
        )
    if backend == "raw_input":
        return np.asarray(batch.inputs, dtype=np.float64)
    if backend == "label":
        if batch.num_classes is not None:
            raise UsageError("the label backend measures target distances and is regression-only")
        targets = np.asarray(batch.targets, dtype=np.float64)
        return targets[:, None] if targets.ndim == 1 else targets
    # Both remaining backends need a live model.
    if model is None:
        raise UsageError(f"the {backend!r} backend requires a model")
    if backend == "embedding":
        from .model import embed

        return embed(model, batch.inputs)
    # class_weight
    if batch.num_classes is None:
        raise UsageError("the class_weight backend requires classification targets")
    labels = np.asarray(batch.targets)
    weights = model.layers[-1].weights  # (hidden, classes)
    return weights[:, labels].T.astype(np.float64, copy=False)

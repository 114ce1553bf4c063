"""A small fully connected network with manual backpropagation.

Plain numpy, nothing clever: affine layers, ReLU or identity activations,
inverted dropout after each hidden activation, SGD with momentum or Adam,
and MC-Dropout predictive mean/variance. Enough model to train the tabular
regression and synthetic classification experiments on a CPU.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import UsageError
from .metrics import PredictiveDistribution
from .rng import RngStream

__all__ = [
    "Layer",
    "ModelState",
    "OptimizerState",
    "init_mlp",
    "forward",
    "backward",
    "optimizer_step",
    "mc_dropout_predict",
    "predictive_distributions",
    "embed",
    "save_model",
    "load_model",
]

ACTIVATIONS = ("relu", "identity")
CHECKPOINT_FORMAT = "warpmix-mlp-v1"


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    biases: np.ndarray  # (fan_out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[1],):
            raise UsageError(
                f"layer shapes inconsistent: weights {self.weights.shape}, biases {self.biases.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise UsageError(f"unknown activation {self.activation!r}")


@dataclass
class ModelState:
    layers: list
    dropout_rate: float = 0.0
    mode: str = "train"
    step_count: int = 0

    def __post_init__(self):
        if not self.layers:
            raise UsageError("model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weights.shape[1] != nxt.weights.shape[0]:
                raise UsageError("consecutive layer dimensions do not chain")
        for layer in self.layers:
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))):
                raise UsageError("layer parameters must be finite")
        if not 0.0 <= float(self.dropout_rate) < 1.0:
            raise UsageError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.mode not in ("train", "eval"):
            raise UsageError(f"mode must be train or eval, got {self.mode!r}")

    @property
    def dims(self) -> tuple:
        return (self.layers[0].weights.shape[0],) + tuple(l.weights.shape[1] for l in self.layers)

    def train(self) -> "ModelState":
        self.mode = "train"
        return self

    def eval(self) -> "ModelState":
        self.mode = "eval"
        return self


@dataclass
class ForwardCache:
    # one (layer_input, pre_activation, dropout_mask) triple per layer
    records: list
    step_count: int


# Weight init: U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero. Draw order
# is layer by layer, weights only, so a fixed stream gives fixed parameters.
def init_mlp(dims, dropout_rate: float, rng: RngStream, hidden_activation: str = "relu") -> ModelState:
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise UsageError(f"dims must list >= 2 positive sizes, got {dims}")
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        bound = 1.0 / math.sqrt(fan_in)
        weights = (rng.uniform(size=(fan_in, fan_out)) * 2.0 - 1.0) * bound
        act = hidden_activation if k < len(dims) - 2 else "identity"
        layers.append(Layer(weights=weights, biases=np.zeros(fan_out), activation=act))
    return ModelState(layers=layers, dropout_rate=float(dropout_rate))


def forward(model: ModelState, inputs, rng: Optional[RngStream] = None):
    """Run the network; returns (outputs, cache) with cache usable by backward.

    Dropout is active only in train mode with a positive rate, uses inverted
    scaling (kept units divided by the keep probability), and draws one mask
    per hidden layer from ``rng`` in layer order.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.layers[0].weights.shape[0]:
        raise UsageError(
            f"inputs of shape {x.shape} do not match first layer fan-in "
            f"{model.layers[0].weights.shape[0]}"
        )
    use_dropout = model.mode == "train" and model.dropout_rate > 0.0 and len(model.layers) > 1
    if use_dropout and rng is None:
        raise UsageError("train-mode forward with dropout needs an rng stream")

    keep = 1.0 - model.dropout_rate
    acts = x
    records = []
    last = len(model.layers) - 1
    for k, layer in enumerate(model.layers):
        z = acts @ layer.weights + layer.biases
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        mask = None
        if use_dropout and k < last:
            mask = (rng.uniform(size=h.shape) < keep).astype(np.float64) / keep
            h = h * mask
        records.append((acts, z, mask))
        acts = h
    return acts, ForwardCache(records=records, step_count=model.step_count)


def backward(model: ModelState, cache: ForwardCache, loss_grad):
    """Gradients of the loss in all parameters, under the cached masks.

    Returns one (weight_grad, bias_grad) pair per layer. Refuses a cache
    recorded at a different optimizer step than the model is at now.
    """
    if cache.step_count != model.step_count:
        raise UsageError(
            f"stale cache: recorded at step {cache.step_count}, model is at {model.step_count}"
        )
    delta = np.asarray(loss_grad, dtype=np.float64)
    n_out = model.layers[-1].weights.shape[1]
    if delta.ndim != 2 or delta.shape[1] != n_out or delta.shape[0] != cache.records[0][0].shape[0]:
        raise UsageError(f"loss gradient shape {delta.shape} does not match outputs")

    grads = [None] * len(model.layers)
    for k in range(len(model.layers) - 1, -1, -1):
        layer_in, z, mask = cache.records[k]
        layer = model.layers[k]
        if mask is not None:
            delta = delta * mask
        if layer.activation == "relu":
            delta = delta * (z > 0.0)
        grads[k] = (layer_in.T @ delta, delta.sum(axis=0))
        if k > 0:
            delta = delta @ layer.weights.T
    return grads


@dataclass
class OptimizerState:
    """SGD with momentum, or Adam with bias correction.

    Weight decay is decoupled (applied directly to weights, scaled by the
    learning rate, never to biases).
    """

    kind: str = "adam"
    learning_rate: float = 0.01
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    slots: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd_momentum", "adam"):
            raise UsageError(f"unknown optimizer kind {self.kind!r}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0.0):
            raise UsageError(f"learning_rate must be >= 0, got {self.learning_rate}")


def _init_slots(opt: OptimizerState, model: ModelState):
    opt.slots = []
    for layer in model.layers:
        zeros = (np.zeros_like(layer.weights), np.zeros_like(layer.biases))
        if opt.kind == "sgd_momentum":
            opt.slots.append(zeros)  # velocity
        else:
            opt.slots.append(zeros + (np.zeros_like(layer.weights), np.zeros_like(layer.biases)))


def optimizer_step(opt: OptimizerState, model: ModelState, grads) -> None:
    """Apply one parameter update in place; bumps the model's step counter."""
    if len(grads) != len(model.layers):
        raise UsageError(f"got {len(grads)} gradient pairs for {len(model.layers)} layers")
    for layer, (gw, gb) in zip(model.layers, grads):
        if gw.shape != layer.weights.shape or gb.shape != layer.biases.shape:
            raise UsageError("gradient shapes do not match parameters")
    if opt.slots is None:
        _init_slots(opt, model)

    lr = opt.learning_rate
    opt.step += 1
    if opt.kind == "sgd_momentum":
        for layer, slot, (gw, gb) in zip(model.layers, opt.slots, grads):
            vw, vb = slot
            vw *= opt.momentum
            vw += gw
            vb *= opt.momentum
            vb += gb
            layer.weights -= lr * vw
            layer.biases -= lr * vb
            if opt.weight_decay:
                layer.weights -= lr * opt.weight_decay * layer.weights
    else:  # adam
        correct1 = 1.0 - opt.beta1**opt.step
        correct2 = 1.0 - opt.beta2**opt.step
        for layer, slot, (gw, gb) in zip(model.layers, opt.slots, grads):
            mw, mb, vw, vb = slot
            mw *= opt.beta1
            mw += (1.0 - opt.beta1) * gw
            mb *= opt.beta1
            mb += (1.0 - opt.beta1) * gb
            vw *= opt.beta2
            vw += (1.0 - opt.beta2) * gw**2
            vb *= opt.beta2
            vb += (1.0 - opt.beta2) * gb**2
            layer.weights -= lr * (mw / correct1) / (np.sqrt(vw / correct2) + opt.eps)
            layer.biases -= lr * (mb / correct1) / (np.sqrt(vb / correct2) + opt.eps)
            if opt.weight_decay:
                layer.weights -= lr * opt.weight_decay * layer.weights
    model.step_count += 1


def mc_dropout_predict(model: ModelState, inputs, samples: int, rng: RngStream):
    """Monte-Carlo dropout: repeated stochastic passes with dropout active.

    Returns one PredictiveDistribution-ready pair of arrays: per-input sample
    mean and unbiased sample variance of the outputs, each shaped like one
    forward output.
    """
    if model.dropout_rate <= 0.0:
        raise UsageError("mc_dropout_predict needs a positive dropout rate")
    samples = int(samples)
    if samples < 2:
        raise UsageError(f"need at least 2 stochastic samples, got {samples}")
    previous_mode = model.mode
    model.mode = "train"
    try:
        outs = np.stack([forward(model, inputs, rng)[0] for _ in range(samples)])
    finally:
        model.mode = previous_mode
    return outs.mean(axis=0), outs.var(axis=0, ddof=1)


def predictive_distributions(means, variances, targets):
    """Zip MC-dropout outputs with targets into PredictiveDistribution rows."""
    means = np.asarray(means, dtype=np.float64).ravel()
    variances = np.asarray(variances, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if not means.shape == variances.shape == targets.shape:
        raise UsageError("means, variances and targets must align")
    return [
        PredictiveDistribution(mean=m, variance=v, target=t)
        for m, v, t in zip(means, variances, targets)
    ]


def embed(model: ModelState, inputs) -> np.ndarray:
    """Deterministic activations entering the final layer (no dropout)."""
    if len(model.layers) < 2:
        raise UsageError("embedding needs a model with at least 2 layers")
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.layers[0].weights.shape[0]:
        raise UsageError(
            f"inputs of shape {x.shape} do not match first layer fan-in "
            f"{model.layers[0].weights.shape[0]}"
        )
    acts = x
    for layer in model.layers[:-1]:
        z = acts @ layer.weights + layer.biases
        acts = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return acts


def save_model(model: ModelState, path) -> None:
    """Write a checkpoint as JSON; floats survive the round trip bit-exactly."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "dropout_rate": model.dropout_rate,
        "step_count": model.step_count,
        "layers": [
            {
                "activation": layer.activation,
                "weights": layer.weights.tolist(),
                "biases": layer.biases.tolist(),
            }
            for layer in model.layers
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> ModelState:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise UsageError(f"not a recognized checkpoint: format={payload.get('format')!r}")
    layers = [
        Layer(
            weights=np.array(spec["weights"], dtype=np.float64),
            biases=np.array(spec["biases"], dtype=np.float64),
            activation=spec["activation"],
        )
        for spec in payload["layers"]
    ]
    model = ModelState(
        layers=layers,
        dropout_rate=float(payload["dropout_rate"]),
        mode="eval",
        step_count=int(payload.get("step_count", 0)),
    )
    return model

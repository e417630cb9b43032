"""Dense feed-forward classifier with hand-written gradients.

Parameters live in a single flat vector so they can be shipped over the
uplink unchanged. Flattening order is layer by layer, each layer's weight
matrix (shape ``in x out``) in row-major order followed by its bias.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ContractError, ShapeError

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class Architecture:
    layer_sizes: Tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ConfigError("need at least an input and an output layer", field="arch")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive, got {list(sizes)}", field="arch")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}", field="activation")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))


@dataclass
class ModelParams:
    values: np.ndarray
    arch: Architecture

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.arch.n_params,):
            raise ShapeError(
                f"parameter vector has shape {self.values.shape}, "
                f"architecture needs ({self.arch.n_params},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ContractError("parameter vector has non-finite entries")

    def copy(self) -> "ModelParams":
        return ModelParams(self.values.copy(), self.arch)


@dataclass
class ExampleBatch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"{self.inputs.shape[0]} input rows but {self.labels.shape[0]} labels"
            )
        if np.any(self.labels < 0):
            raise ShapeError("labels must be non-negative class indices")

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, index) -> "ExampleBatch":
        return ExampleBatch(self.inputs[index], self.labels[index])


def unflatten(arch: Architecture, values: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Split a flat parameter vector into per-layer ``(W, b)`` views."""
    layers = []
    offset = 0
    for n_in, n_out in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        w = values[offset:offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        b = values[offset:offset + n_out]
        offset += n_out
        layers.append((w, b))
    return layers


def flatten(layers: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for w, b in layers:
        parts.append(np.asarray(w, dtype=np.float64).ravel())
        parts.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts)


def init_model(arch: Architecture, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for n_in, n_out in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        layers.append((rng.uniform(-bound, bound, size=(n_in, n_out)), np.zeros(n_out)))
    return ModelParams(flatten(layers), arch)


def _check_inputs(model: ModelParams, batch: ExampleBatch):
    if batch.inputs.shape[1] != model.arch.input_dim:
        raise ShapeError(
            f"input dimension {batch.inputs.shape[1]} does not match "
            f"architecture input {model.arch.input_dim}"
        )
    if len(batch) == 0:
        raise ShapeError("empty batch")


def _forward(model: ModelParams, x: np.ndarray):
    """Return output logits and the list of layer inputs needed for backprop."""
    layers = unflatten(model.arch, model.values)
    relu = model.arch.activation == "relu"
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            if relu:
                h = np.maximum(h, 0.0)
            acts.append(h)
    return h, acts, layers


def _backward(model: ModelParams, acts, layers, dlogits: np.ndarray) -> np.ndarray:
    relu = model.arch.activation == "relu"
    grads = [None] * len(layers)
    delta = dlogits
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = delta @ w.T
            if relu:
                # subgradient 0 at the kink
                delta = delta * (acts[i] > 0.0)
    return flatten(grads)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward_logits(model: ModelParams, batch: ExampleBatch) -> np.ndarray:
    """Logit block of shape ``(len(batch), C)``; flatten with ``.ravel()``."""
    _check_inputs(model, batch)
    logits, _, _ = _forward(model, batch.inputs)
    return logits


def _check_labels(model: ModelParams, batch: ExampleBatch):
    if np.any(batch.labels >= model.arch.n_classes):
        raise ShapeError(f"label out of range for {model.arch.n_classes} classes")


def ce_loss(model: ModelParams, batch: ExampleBatch) -> float:
    """Mean cross-entropy over the batch."""
    _check_inputs(model, batch)
    _check_labels(model, batch)
    logits, _, _ = _forward(model, batch.inputs)
    logp = log_softmax(logits)
    return float(-logp[np.arange(len(batch)), batch.labels].mean())


def ce_gradient(model: ModelParams, batch: ExampleBatch) -> np.ndarray:
    _check_inputs(model, batch)
    _check_labels(model, batch)
    logits, acts, layers = _forward(model, batch.inputs)
    n = len(batch)
    dlogits = softmax(logits)
    dlogits[np.arange(n), batch.labels] -= 1.0
    return _backward(model, acts, layers, dlogits / n)


def _kd_targets(targets, n_rows: int, n_classes: int) -> np.ndarray:
    t = np.asarray(targets, dtype=np.float64)
    if t.size != n_rows * n_classes:
        raise ShapeError(
            f"target block has {t.size} entries, expected {n_rows}x{n_classes}"
        )
    return t.reshape(n_rows, n_classes)


def kd_loss(model: ModelParams, public_batch: ExampleBatch, targets, tau: float) -> float:
    """Mean per-row KL(softmax(targets/tau) || softmax(logits/tau))."""
    if tau <= 0:
        raise ConfigError("temperature must be positive", field="tau")
    _check_inputs(model, public_batch)
    t = _kd_targets(targets, len(public_batch), model.arch.n_classes)
    logits, _, _ = _forward(model, public_batch.inputs)
    log_pt = log_softmax(t / tau)
    log_pm = log_softmax(logits / tau)
    return float((np.exp(log_pt) * (log_pt - log_pm)).sum(axis=1).mean())


def kd_gradient(model: ModelParams, public_batch: ExampleBatch, targets, tau: float) -> np.ndarray:
    """Gradient of :func:`kd_loss` w.r.t. the parameters (no tau**2 rescaling)."""
    if tau <= 0:
        raise ConfigError("temperature must be positive", field="tau")
    _check_inputs(model, public_batch)
    n = len(public_batch)
    t = _kd_targets(targets, n, model.arch.n_classes)
    logits, acts, layers = _forward(model, public_batch.inputs)
    dlogits = (softmax(logits / tau) - softmax(t / tau)) / (tau * n)
    return _backward(model, acts, layers, dlogits)


def sgd_step(model: ModelParams, grad: np.ndarray, lr: float) -> ModelParams:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != model.values.shape:
        raise ShapeError(f"gradient shape {grad.shape} != parameter shape {model.values.shape}")
    return ModelParams(model.values - lr * grad, model.arch)


def predict(model: ModelParams, inputs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lowest class index
    logits, _, _ = _forward(model, np.atleast_2d(inputs))
    return np.argmax(logits, axis=1)


def evaluate_accuracy(model: ModelParams, test: ExampleBatch) -> float:
    _check_inputs(model, test)
    return float(np.mean(predict(model, test.inputs) == test.labels))

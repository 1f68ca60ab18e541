"""Flat parameter-vector arithmetic and a small differentiable MLP.

Parameter vectors are plain 1-D ``float64`` numpy arrays. The MLP stores,
for every layer in order, its weight matrix (``out x in``, row-major)
followed by its bias vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, NumericError

ACTIVATIONS = ("relu", "tanh")
KINDS = ("logistic", "mlp")


def as_vector(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise DimensionError(f"expected a 1-D parameter vector, got shape {vec.shape}")
    return vec


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def dot(a, b) -> float:
    a, b = as_vector(a), as_vector(b)
    _check_same_length(a, b)
    return float(np.dot(a, b))


def norm(a) -> float:
    return float(np.linalg.norm(as_vector(a)))


def axpy(a, s: float, b) -> np.ndarray:
    """Return ``a + s * b`` as a new vector."""
    a, b = as_vector(a), as_vector(b)
    _check_same_length(a, b)
    out = a + s * b
    if not np.all(np.isfinite(out)):
        raise NumericError("axpy produced non-finite entries")
    return out


@dataclass(frozen=True)
class DomainBatch:
    features: np.ndarray
    labels: np.ndarray
    domain_id: int = 0

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise DimensionError(f"features {x.shape} and labels {y.shape} disagree")
        if x.shape[0] < 1:
            raise DimensionError("a batch needs at least one example")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("labels must be exactly 0 or 1")
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite features")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "domain_id", int(self.domain_id))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def pool_batches(batches: Sequence[DomainBatch], domain_id: int = -1) -> DomainBatch:
    """Concatenate batches in ascending domain order."""
    ordered = sorted(batches, key=lambda b: b.domain_id)
    return DomainBatch(
        np.concatenate([b.features for b in ordered]),
        np.concatenate([b.labels for b in ordered]),
        domain_id,
    )


@dataclass(frozen=True)
class ModelSpec:
    """A binary classifier ``f(x; theta)`` producing one logit per example.

    ``layer_widths`` lists the input dimension first and the output width 1
    last. ``logistic`` models have exactly two widths and no activation.
    """

    kind: str = "mlp"
    layer_widths: tuple[int, ...] = field(default=(2, 16, 16, 1))
    activation: str = "tanh"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"invalid layer widths {widths}")
        if widths[-1] != 1:
            raise ValueError("output width must be 1")
        if self.kind == "logistic" and len(widths) != 2:
            raise ValueError("logistic models have widths (d, 1)")

    @classmethod
    def logistic(cls, d: int) -> "ModelSpec":
        return cls("logistic", (d, 1), "tanh")

    @classmethod
    def mlp(cls, d: int, hidden: Sequence[int] = (16, 16), activation: str = "tanh") -> "ModelSpec":
        return cls("mlp", (d, *hidden, 1), activation)

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def n_params(self) -> int:
        w = self.layer_widths
        return sum(w[i + 1] * w[i] + w[i + 1] for i in range(len(w) - 1))

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split a flat vector into per-layer ``(W, b)`` views."""
        params = as_vector(params)
        if params.shape[0] != self.n_params:
            raise DimensionError(f"expected {self.n_params} parameters, got {params.shape[0]}")
        layers, pos = [], 0
        w = self.layer_widths
        for fan_in, fan_out in zip(w[:-1], w[1:]):
            W = params[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in)
            pos += fan_in * fan_out
            b = params[pos : pos + fan_out]
            pos += fan_out
            layers.append((W, b))
        return layers

    # These let the optimizers treat ModelSpec and synthetic objectives alike.
    def loss(self, params, batch: DomainBatch) -> float:
        return loss(self, params, batch)

    def grad(self, params, batch: DomainBatch) -> np.ndarray:
        return grad(self, params, batch)

    def value_and_grad(self, params, batch: DomainBatch) -> tuple[float, np.ndarray]:
        return value_and_grad(self, params, batch)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_deriv(z: np.ndarray, a: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return 1.0 - a * a
    # subgradient 0 at the kink
    return (z > 0.0).astype(np.float64)


def _forward(spec: ModelSpec, layers, x: np.ndarray):
    if x.shape[1] != spec.input_dim:
        raise DimensionError(f"model expects {spec.input_dim} features, got {x.shape[1]}")
    pre, post = [], [x]
    a = x
    for i, (W, b) in enumerate(layers):
        z = a @ W.T + b
        pre.append(z)
        a = z if i == len(layers) - 1 else _activate(z, spec.activation)
        post.append(a)
    return pre, post


def logits(spec: ModelSpec, params, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    _, post = _forward(spec, spec.unpack(params), x)
    return post[-1][:, 0]


def bce_from_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-example binary cross-entropy, stable for saturated logits."""
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # two branches keep exp() from overflowing
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def value_and_grad(spec: ModelSpec, params, batch: DomainBatch) -> tuple[float, np.ndarray]:
    """Mean BCE and its exact gradient by layer-by-layer backpropagation."""
    layers = spec.unpack(params)
    pre, post = _forward(spec, layers, batch.features)
    z = pre[-1][:, 0]
    y = batch.labels
    n = y.shape[0]
    value = float(np.mean(bce_from_logits(z, y)))

    delta = ((sigmoid(z) - y) / n)[:, None]
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads.append((delta.sum(axis=0), (delta.T @ post[i]).ravel()))
        if i > 0:
            delta = (delta @ W) * _activation_deriv(pre[i - 1], post[i], spec.activation)
    flat = []
    for gb, gW in reversed(grads):
        flat.append(gW)
        flat.append(gb)
    return value, np.concatenate(flat)


def loss(spec: ModelSpec, params, batch: DomainBatch) -> float:
    z = logits(spec, params, batch.features)
    return float(np.mean(bce_from_logits(z, batch.labels)))


def grad(spec: ModelSpec, params, batch: DomainBatch) -> np.ndarray:
    return value_and_grad(spec, params, batch)[1]


def finite_difference_grad(model, params, batch: DomainBatch, h: float) -> np.ndarray:
    """Central-difference gradient of ``model.loss``, one coordinate at a time."""
    params = as_vector(params)
    out = np.empty_like(params)
    for j in range(params.shape[0]):
        step = np.zeros_like(params)
        step[j] = h
        out[j] = (model.loss(params + step, batch) - model.loss(params - step, batch)) / (2 * h)
    return out


# Coordinates whose gradient is smaller than this are compared absolutely.
GRAD_CHECK_FLOOR = 1e-4


def grad_check(spec, params, batch: DomainBatch, h: float = 1e-5) -> float:
    """Max per-coordinate relative error between ``grad`` and central differences.

    The denominator is ``max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)`` so that
    coordinates with vanishing gradient do not dominate on roundoff alone.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    analytic = spec.grad(params, batch)
    numeric = finite_difference_grad(spec, params, batch, h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), GRAD_CHECK_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))

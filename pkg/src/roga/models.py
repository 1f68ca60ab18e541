"""Model constructors, initialization and scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import DomainBatch, ModelSpec, as_vector, logits, sigmoid

INIT_SCHEMES = ("glorot_uniform", "zeros")


@dataclass(frozen=True)
class InitSpec:
    scheme: str = "glorot_uniform"
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {self.scheme!r}")


def init_params(spec: ModelSpec, init: InitSpec = InitSpec()) -> np.ndarray:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    params = np.zeros(spec.n_params)
    if init.scheme == "zeros":
        return params
    rng = np.random.Generator(np.random.PCG64(init.seed))
    for W, _ in spec.unpack(params):
        fan_out, fan_in = W.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        # W is a view into params
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return params


def predict_scores(spec: ModelSpec, params, features) -> np.ndarray:
    """Probability of the positive class for each row of ``features``."""
    return sigmoid(logits(spec, params, features))


class QuadraticModel:
    """Synthetic objective ``0.5 * t^T H t + c^T t`` that ignores the batch.

    Used to check optimizer arithmetic against closed forms.
    """

    def __init__(self, hessian, linear=None):
        H = np.atleast_2d(np.asarray(hessian, dtype=np.float64))
        if H.shape[0] != H.shape[1]:
            raise ValueError("hessian must be square")
        self.hessian = H
        self.linear = np.zeros(H.shape[0]) if linear is None else as_vector(linear)
        self.n_params = H.shape[0]

    def loss(self, params, batch: DomainBatch | None = None) -> float:
        t = as_vector(params)
        return float(0.5 * t @ self.hessian @ t + self.linear @ t)

    def grad(self, params, batch: DomainBatch | None = None) -> np.ndarray:
        return self.hessian @ as_vector(params) + self.linear

    def value_and_grad(self, params, batch: DomainBatch | None = None):
        return self.loss(params, batch), self.grad(params, batch)

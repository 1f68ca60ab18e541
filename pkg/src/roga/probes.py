"""Loss-landscape diagnostics: rho-ball sharpness, domain gradient cosines, 1-D slices."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .diffcore import DomainBatch, as_vector, norm
from .optim import epsilon_hat


@dataclass(frozen=True)
class SharpnessResult:
    base_loss: float
    max_perturbed_loss: float
    sharpness: float
    rho: float
    ascent_iters: int
    restarts: int

    def to_dict(self) -> dict:
        return asdict(self)


def _project(eps: np.ndarray, rho: float) -> np.ndarray:
    n = norm(eps)
    return eps if n <= rho else eps * (rho / n)


def _random_start(rng: np.random.Generator, size: int, rho: float) -> np.ndarray:
    direction = rng.standard_normal(size)
    n = norm(direction)
    return direction * (rho / n) if n > 0 else direction


def _ascend(model, theta, data, eps, rho, iters, grad_floor):
    """Projected normalized-gradient ascent; returns the best loss visited."""
    step = rho / iters
    best = model.loss(theta + eps, data)
    for _ in range(iters):
        g = model.grad(theta + eps, data)
        g_norm = norm(g)
        if g_norm < grad_floor:
            break
        eps = _project(eps + (step / g_norm) * g, rho)
        best = max(best, model.loss(theta + eps, data))
    return best


def sharpness(
    model,
    theta,
    data: DomainBatch,
    rho: float,
    ascent_iters: int = 20,
    restarts: int = 5,
    seed: int = 0,
    grad_floor: float = 1e-12,
) -> SharpnessResult:
    """Approximate ``max_{||eps||<=rho} L(theta+eps) - L(theta)``.

    Candidates: ``eps = 0``, an ascent run started at the first-order point
    ``rho * g / ||g||``, and ``restarts`` ascent runs from random points on
    the sphere. Restart ``r`` draws from its own stream ``(seed, r)``, so
    adding restarts only enlarges the candidate set.
    """
    if rho <= 0 or ascent_iters < 1 or restarts < 0:
        raise ValueError("need rho > 0, ascent_iters >= 1, restarts >= 0")
    theta = as_vector(theta)
    base_value, g = model.value_and_grad(theta, data)
    best = base_value

    starts = [epsilon_hat(g, rho, grad_floor)]
    for r in range(restarts):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), r])))
        starts.append(_random_start(rng, theta.shape[0], rho))
    for eps in starts:
        best = max(best, _ascend(model, theta, data, eps, rho, ascent_iters, grad_floor))

    return SharpnessResult(base_value, best, best - base_value, rho, ascent_iters, restarts)


def domain_gradient_cosine(
    model, theta, batches: Sequence[DomainBatch], grad_floor: float = 1e-12
) -> np.ndarray:
    """Pairwise cosine similarity of per-domain gradients, domains in ascending id order.

    Rows for gradients shorter than ``grad_floor`` are zero.
    """
    if len(batches) < 2:
        raise ValueError("need at least two domains")
    ordered = sorted(batches, key=lambda b: b.domain_id)
    grads = [model.grad(theta, b) for b in ordered]
    norms = [norm(g) for g in grads]
    k = len(grads)
    out = np.zeros((k, k))
    for i in range(k):
        if norms[i] < grad_floor:
            continue
        out[i, i] = 1.0
        for j in range(i + 1, k):
            if norms[j] < grad_floor:
                continue
            c = float(np.dot(grads[i], grads[j]) / (norms[i] * norms[j]))
            out[i, j] = out[j, i] = min(1.0, max(-1.0, c))
    return out


def loss_slice_1d(model, theta, direction, half_range: float, steps: int, data: DomainBatch):
    """Losses along ``theta + t * direction/||direction||`` for ``steps`` evenly spaced t."""
    if steps < 3:
        raise ValueError("steps must be >= 3")
    direction = as_vector(direction)
    d_norm = norm(direction)
    if d_norm == 0.0:
        raise ValueError("direction must be nonzero")
    theta = as_vector(theta)
    u = direction / d_norm
    ts = np.linspace(-half_range, half_range, steps)
    if steps % 2 == 1:
        ts[steps // 2] = 0.0
    return [(float(t), model.loss(theta + t * u, data)) for t in ts]

"""SAM perturbations, the multi-domain perturbed loss and the RoGA update.

Every function takes a ``model`` exposing ``loss(params, batch)``,
``grad(params, batch)`` and ``value_and_grad(params, batch)``; both
:class:`~roga.diffcore.ModelSpec` and :class:`~roga.models.QuadraticModel`
qualify.

The RoGA per-domain objective is

    loss(theta + eps_i) - alpha * <grad(theta + eps_i), grad(theta)>

with ``eps_i`` estimated at the current iterate and then held constant.
Its gradient needs two Hessian-vector products, evaluated by central
differences of the gradient.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .diffcore import DomainBatch, as_vector, axpy, dot, norm, pool_batches
from .errors import DimensionError, NumericError


@dataclass(frozen=True)
class OptimizerConfig:
    rho: float = 0.1
    alpha: float = 0.001
    lr: float = 0.005
    momentum: float = 0.0
    hvp_step: float = 1e-4
    grad_floor: float = 1e-12

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
        if self.rho < 0 or self.alpha < 0:
            raise ValueError("rho and alpha must be non-negative")
        if self.lr <= 0 or self.hvp_step <= 0 or self.grad_floor <= 0:
            raise ValueError("lr, hvp_step and grad_floor must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class StepDiagnostics:
    per_domain_loss: list[float] = field(default_factory=list)
    per_domain_perturbed_loss: list[float] = field(default_factory=list)
    per_domain_alignment: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    aggregate_grad_norm: float = 0.0
    domain_ids: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class DomainEntry:
    domain_id: int
    loss: float
    perturbed_loss: float
    alignment: float
    grad_norm: float


def epsilon_hat(g, rho: float, grad_floor: float = 1e-12) -> np.ndarray:
    """First-order maximizer ``rho * g / ||g||`` of the loss on the rho-ball.

    Gradients shorter than ``grad_floor`` yield the zero perturbation.
    """
    g = as_vector(g)
    if rho < 0:
        raise ValueError("rho must be non-negative")
    g_norm = norm(g)
    if g_norm < grad_floor or rho == 0:
        return np.zeros_like(g)
    return (rho / g_norm) * g


def multi_domain_perturbed_loss(
    model, theta, batches: Sequence[DomainBatch], rho: float, grad_floor: float = 1e-12
) -> float:
    """Mean over domains of the loss at the domain's own SAM point."""
    if len(batches) < 1:
        raise ValueError("need at least one domain batch")
    total = 0.0
    for batch in sorted(batches, key=lambda b: b.domain_id):
        eps = epsilon_hat(model.grad(theta, batch), rho, grad_floor)
        total += model.loss(axpy(theta, 1.0, eps), batch)
    return total / len(batches)


def roga_objective(
    model, theta, batches: Sequence[DomainBatch], rho: float, alpha: float, grad_floor: float = 1e-12
) -> float:
    """Value of the full objective (perturbed loss minus alignment), averaged over domains."""
    total = 0.0
    for batch in sorted(batches, key=lambda b: b.domain_id):
        g = model.grad(theta, batch)
        theta_p = axpy(theta, 1.0, epsilon_hat(g, rho, grad_floor))
        value, g_p = model.value_and_grad(theta_p, batch)
        total += value - alpha * dot(g_p, g)
    return total / len(batches)


def hvp(model, params, batch: DomainBatch, v, hvp_step: float = 1e-4) -> np.ndarray:
    """Hessian-vector product by central differences along ``v / ||v||``.

    The step is ``hvp_step * (1 + ||params||)``; a zero ``v`` gives zero.
    """
    params, v = as_vector(params), as_vector(v)
    if params.shape != v.shape:
        raise DimensionError(f"length mismatch: {params.shape[0]} vs {v.shape[0]}")
    if hvp_step <= 0:
        raise ValueError("hvp_step must be positive")
    v_norm = norm(v)
    if v_norm == 0.0:
        return np.zeros_like(v)
    u = v / v_norm
    h = hvp_step * (1.0 + norm(params))
    g_plus = model.grad(params + h * u, batch)
    g_minus = model.grad(params - h * u, batch)
    return v_norm * (g_plus - g_minus) / (2.0 * h)


def roga_domain_gradient(
    model, theta, batch: DomainBatch, cfg: OptimizerConfig, perturbed_loss: bool = True
) -> tuple[np.ndarray, DomainEntry]:
    """Gradient of one domain's RoGA objective with the perturbation held fixed.

    Returns ``g_p - alpha * (H(theta+eps) g + H(theta) g_p)`` where ``g`` and
    ``g_p`` are the gradients at ``theta`` and ``theta + eps``. With
    ``perturbed_loss=False`` the leading ``g_p`` is replaced by ``g``, which
    keeps the alignment term alone (ablation variant).
    """
    theta = as_vector(theta)
    value, g = model.value_and_grad(theta, batch)
    eps = epsilon_hat(g, cfg.rho, cfg.grad_floor)
    theta_p = theta + eps
    perturbed_value, g_p = model.value_and_grad(theta_p, batch)
    if theta.shape != g.shape:
        raise DimensionError(f"gradient length {g.shape[0]} does not match theta {theta.shape[0]}")

    direction = g_p if perturbed_loss else g
    if cfg.alpha != 0.0:
        align_grad = hvp(model, theta_p, batch, g, cfg.hvp_step) + hvp(model, theta, batch, g_p, cfg.hvp_step)
        direction = direction - cfg.alpha * align_grad

    alignment = dot(g_p, g)
    checks = (value, perturbed_value, alignment)
    if not (all(math.isfinite(c) for c in checks) and np.all(np.isfinite(direction))):
        raise NumericError(f"non-finite loss or gradient in domain {batch.domain_id}")
    entry = DomainEntry(batch.domain_id, value, perturbed_value, alignment, norm(g))
    return direction, entry


def _apply_update(theta, velocity, aggregate, cfg: OptimizerConfig):
    theta, velocity = as_vector(theta), as_vector(velocity)
    if velocity.shape != theta.shape:
        raise DimensionError(f"velocity length {velocity.shape[0]} does not match theta {theta.shape[0]}")
    new_velocity = cfg.momentum * velocity + aggregate
    new_theta = theta - cfg.lr * new_velocity
    if not np.all(np.isfinite(new_theta)):
        raise NumericError("parameters became non-finite")
    return new_theta, new_velocity


def roga_step(
    model,
    theta,
    batches: Sequence[DomainBatch],
    cfg: OptimizerConfig,
    velocity,
    executor: Executor | None = None,
    perturbed_loss: bool = True,
) -> tuple[np.ndarray, np.ndarray, StepDiagnostics]:
    """One RoGA update averaged over the supplied domain batches.

    Per-domain gradients may be computed on ``executor``; they are always
    summed in ascending ``domain_id`` order.
    """
    if len(batches) < 1:
        raise ValueError("need at least one domain batch")
    ordered = sorted(batches, key=lambda b: b.domain_id)
    if executor is None:
        results = [roga_domain_gradient(model, theta, b, cfg, perturbed_loss) for b in ordered]
    else:
        futures = [executor.submit(roga_domain_gradient, model, theta, b, cfg, perturbed_loss) for b in ordered]
        results = [f.result() for f in futures]

    total = results[0][0]
    for direction, _ in results[1:]:
        total = total + direction
    aggregate = total / len(results)
    new_theta, new_velocity = _apply_update(theta, velocity, aggregate, cfg)

    entries = [entry for _, entry in results]
    diag = StepDiagnostics(
        per_domain_loss=[e.loss for e in entries],
        per_domain_perturbed_loss=[e.perturbed_loss for e in entries],
        per_domain_alignment=[e.alignment for e in entries],
        grad_norms=[e.grad_norm for e in entries],
        aggregate_grad_norm=norm(aggregate),
        domain_ids=[e.domain_id for e in entries],
    )
    return new_theta, new_velocity, diag


def sam_step(model, theta, pooled_batch: DomainBatch, cfg: OptimizerConfig, velocity):
    """SAM on one (pooled) batch: RoGA with a single domain and no alignment."""
    return roga_step(model, theta, [pooled_batch], replace(cfg, alpha=0.0), velocity)


def sgd_step(model, theta, pooled_batch: DomainBatch, cfg: OptimizerConfig, velocity):
    """Momentum SGD on the pooled batch loss."""
    value, g = model.value_and_grad(as_vector(theta), pooled_batch)
    if not (math.isfinite(value) and np.all(np.isfinite(g))):
        raise NumericError(f"non-finite loss or gradient in domain {pooled_batch.domain_id}")
    new_theta, new_velocity = _apply_update(theta, velocity, g, cfg)
    g_norm = norm(g)
    diag = StepDiagnostics(
        per_domain_loss=[value],
        per_domain_perturbed_loss=[value],
        per_domain_alignment=[g_norm * g_norm],
        grad_norms=[g_norm],
        aggregate_grad_norm=g_norm,
        domain_ids=[pooled_batch.domain_id],
    )
    return new_theta, new_velocity, diag


def optimizer_step(kind: str, model, theta, batches, cfg, velocity, executor=None):
    """Dispatch one step of ``sgd``, ``sam`` or ``roga`` on per-domain batches."""
    if kind == "sgd":
        return sgd_step(model, theta, pool_batches(batches), cfg, velocity)
    if kind == "sam":
        return sam_step(model, theta, pool_batches(batches), cfg, velocity)
    if kind == "roga":
        return roga_step(model, theta, batches, cfg, velocity, executor)
    if kind == "align":
        return roga_step(model, theta, batches, cfg, velocity, executor, perturbed_loss=False)
    raise ValueError(f"unknown optimizer {kind!r}")

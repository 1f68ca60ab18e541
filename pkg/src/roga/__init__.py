"""Multi-domain robust optimization: ERM-SGD, SAM and RoGA on small numpy models."""

from .diffcore import DomainBatch, ModelSpec, axpy, dot, grad, grad_check, loss, norm
from .errors import ConfigError, DegenerateInputError, DimensionError, NumericError
from .models import InitSpec, QuadraticModel, init_params, predict_scores
from .optim import (
    OptimizerConfig,
    StepDiagnostics,
    epsilon_hat,
    hvp,
    multi_domain_perturbed_loss,
    roga_domain_gradient,
    roga_objective,
    roga_step,
    sam_step,
    sgd_step,
)

__version__ = "0.1.0"

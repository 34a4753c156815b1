"""Nesterov momentum with L2 weight decay, and global-norm clipping."""

import logging
import math
from typing import Mapping, Optional

import numpy as np

from autodiff import NonFiniteError, Parameter
from training.models import OptimizerState

logger = logging.getLogger(__name__)


def create_optimizer(params: Mapping[str, Parameter], momentum: float, weight_decay: float) -> OptimizerState:
    return OptimizerState(
        momentum=momentum,
        weight_decay=weight_decay,
        velocity={name: np.zeros_like(p.data) for name, p in params.items()},
    )


def nesterov_step(
    params: Mapping[str, Parameter],
    grads: Mapping[str, np.ndarray],
    opt: OptimizerState,
    lr: float,
) -> None:
    """
    Update parameters in place.

    g ← g + λθ (weights only); v ← µv − lr·g; θ ← θ + µv − lr·g.

    Raises:
        NonFiniteError: Naming the first parameter with a non-finite gradient;
            no parameter is updated in that case
    """
    for name in params:
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteError(f"Non-finite gradient for parameter {name}")

    mu = opt.momentum
    for name, param in params.items():
        grad = grads[name]
        if param.decay and opt.weight_decay:
            grad = grad + opt.weight_decay * param.data
        velocity = opt.velocity.setdefault(name, np.zeros_like(param.data))
        velocity *= mu
        velocity -= lr * grad
        param.data += mu * velocity - lr * grad


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(math.fsum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_gradients(grads: Mapping[str, np.ndarray], max_norm: Optional[float]) -> dict[str, np.ndarray]:
    """Rescale all gradients together when their global L2 norm exceeds `max_norm`."""
    if max_norm is None:
        return dict(grads)
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return dict(grads)
    scale = max_norm / norm
    logger.debug(f"Clipping gradient norm {norm:.3f} to {max_norm}")
    return {name: g * scale for name, g in grads.items()}

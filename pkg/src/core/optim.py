"""
Mini-batch SGD with momentum and the step learning-rate schedule
"""

import logging
from typing import Dict, Optional, Sequence

import numpy as np

from autodiff.tensor import Tensor
from core.exceptions import ConfigError, ShapeError

logger = logging.getLogger(__name__)


def lr_at(step: int, base_lr: float, boundaries: Sequence[int], factor: float = 0.1) -> float:
    """Piecewise-constant schedule: base_lr * factor^(boundaries passed)"""
    if step < 0:
        raise ConfigError(f"step must be >= 0, got {step}")
    passed = sum(1 for boundary in boundaries if step >= boundary)
    return base_lr * factor ** passed


def sgd_momentum_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    velocity: Dict[str, np.ndarray],
    lr: float,
    momentum: float,
    weight_decay: float = 0.0,
):
    """In place: v <- momentum * v + (g + wd * p); p <- p - lr * v"""
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != param.shape:
            raise ShapeError(f"gradient of {name} does not match the parameter", grad.shape, param.shape)
        buffer = velocity.get(name)
        if buffer is None:
            buffer = velocity[name] = np.zeros_like(param)
        elif buffer.shape != param.shape:
            raise ShapeError(f"velocity of {name} does not match the parameter", buffer.shape, param.shape)
        if weight_decay:
            grad = grad + weight_decay * param
        buffer *= momentum
        buffer += grad
        param -= lr * buffer


class SGD:
    """Momentum SGD over a model's named parameter tensors"""

    def __init__(self, parameters: Dict[str, Tensor], momentum: float = 0.9, weight_decay: float = 0.0):
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
        self.parameters = parameters
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in parameters.items()}

    def step(self, lr: float, grads: Optional[Dict[str, np.ndarray]] = None):
        if grads is None:
            grads = {name: p.grad for name, p in self.parameters.items() if p.grad is not None}
        sgd_momentum_step(
            {name: p.data for name, p in self.parameters.items()},
            grads,
            self.velocity,
            lr,
            self.momentum,
            self.weight_decay,
        )

    def zero_grad(self):
        for param in self.parameters.values():
            param.zero_grad()

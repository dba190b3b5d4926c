"""
Gradient tape and plain SGD with global-norm clipping
"""

import logging
import math
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from ..exceptions import ShapeError, TrainingError
from .tensor import Params

logger = logging.getLogger(__name__)


class GradTape:
    """Gradient buffers mirroring a set of named parameter groups"""

    def __init__(self, groups: Dict[str, Params]):
        """
        Args:
            groups: Parameter groups by name (e.g. 'lstm0', 'decoder')
        """
        self.groups = groups
        self.grads: Dict[str, Params] = {name: p.zeros_like() for name, p in groups.items()}

    def __getitem__(self, name: str) -> Params:
        return self.grads[name]

    def __contains__(self, name: str) -> bool:
        return name in self.grads

    def items(self) -> Iterator[Tuple[str, Params]]:
        return iter(self.grads.items())

    def zero(self):
        for grad in self.grads.values():
            for arr in grad:
                arr.fill(0.0)

    def scale(self, factor: float):
        for grad in self.grads.values():
            for arr in grad:
                arr *= factor

    def global_norm(self) -> float:
        total = 0.0
        for grad in self.grads.values():
            for arr in grad:
                total += float(np.sum(np.square(arr, dtype=np.float64)))
        return math.sqrt(total)


def sgd_step(groups: Dict[str, Params], tape: GradTape, lr: float, clip: float = math.inf,
             step: Optional[int] = None) -> Dict[str, Params]:
    """
    Clip gradients by global norm, apply params -= lr * grad, zero the tape

    Args:
        groups: Parameter groups, updated in place
        tape: Gradients for the same groups
        lr: Learning rate (> 0)
        clip: Maximum global gradient norm
        step: Optimizer step, only used in diagnostics

    Returns:
        The updated groups
    """
    if not lr > 0:
        raise TrainingError(f"Learning rate must be positive, got {lr}", lr=lr, step=step)

    norm = tape.global_norm()
    if not math.isfinite(norm):
        raise TrainingError("Non-finite gradient norm", lr=lr, step=step)

    factor = lr
    if norm > clip:
        factor = lr * clip / norm
        logger.debug(f"Clipping gradient norm {norm:.4f} to {clip}")

    for name, params in groups.items():
        if name not in tape:
            raise ShapeError(f"No gradients recorded for parameter group '{name}'")
        for (field, arr), (_, grad) in zip(params.named(), tape[name].named()):
            if arr.shape != grad.shape:
                raise ShapeError(f"Gradient shape {grad.shape} differs from {name}.{field} {arr.shape}")
            arr -= factor * grad

    tape.zero()
    return groups

"""
Finite-difference gradient checking
"""

import logging
from typing import Callable, Dict, Optional

import numpy as np

from ..exceptions import NumericError
from .optim import GradTape
from .tensor import DOUBLE, Params

logger = logging.getLogger(__name__)

# Called with a tape to accumulate analytic gradients, or with None for loss only
LossFn = Callable[[Optional[GradTape]], float]


def grad_check(loss_fn: LossFn, groups: Dict[str, Params], eps: float = 1e-5) -> float:
    """
    Compare analytic gradients with central differences on every coordinate

    Args:
        loss_fn: Computes the scalar loss from the current values in `groups`;
                 when given a tape it must also accumulate the analytic gradients
        groups: Parameter groups to perturb (float64 only)
        eps: Finite-difference step

    Returns:
        Worst relative error |a - n| / max(|a| + |n|, 1e-8) over all coordinates
    """
    for name, params in groups.items():
        for field, arr in params.named():
            if arr.dtype != DOUBLE:
                raise NumericError(f"grad_check needs float64 tensors, {name}.{field} is {arr.dtype}")

    tape = GradTape(groups)
    loss_fn(tape)

    worst = 0.0
    worst_at = None
    for name, params in groups.items():
        for (field, arr), (_, grad) in zip(params.named(), tape[name].named()):
            flat = arr.reshape(-1)
            flat_grad = grad.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                plus = loss_fn(None)
                flat[k] = orig - eps
                minus = loss_fn(None)
                flat[k] = orig

                numeric = (plus - minus) / (2.0 * eps)
                analytic = float(flat_grad[k])
                err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
                if err > worst:
                    worst = err
                    worst_at = f"{name}.{field}[{k}]"

    logger.debug(f"grad_check worst relative error {worst:.3e} at {worst_at}")
    return worst

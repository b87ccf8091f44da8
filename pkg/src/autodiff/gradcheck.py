"""
Finite-difference helpers for verifying analytic gradients
"""

from typing import Callable

import numpy as np

from core.exceptions import ShapeError

DEFAULT_STEP = 1e-5


def numerical_gradient(
    fn: Callable[[], float],
    array: np.ndarray,
    step: float = DEFAULT_STEP,
) -> np.ndarray:
    """
    Central differences of a scalar function w.r.t. every element of ``array``.

    ``array`` is perturbed in place and restored after each evaluation, so ``fn``
    must read it (typically it is a parameter buffer).
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = fn()
        flat[i] = original - step
        minus = fn()
        flat[i] = original
        flat_grad[i] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """
    ||a - n|| / max(||a||, ||n||, floor) over the whole array.

    Measured on norms so that entries with near-zero gradient, where central
    differences carry only rounding noise, do not dominate the result.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise ShapeError("gradients differ in shape", analytic.shape, numeric.shape)
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), floor)
    return float(np.linalg.norm(analytic - numeric)) / scale

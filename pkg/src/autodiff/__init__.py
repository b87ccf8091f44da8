# Reverse-mode autodiff on float64 numpy arrays
from autodiff.tensor import OpNode, Tensor, backward, is_grad_enabled, no_grad, record

__all__ = ["OpNode", "Tensor", "backward", "is_grad_enabled", "no_grad", "record"]

"""
Dense float64 tensor with a recorded reverse-mode graph
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import GradientError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    """Whether ops on this thread record graph nodes"""
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread"""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


@dataclass
class OpNode:
    """One recorded operation: its kind, inputs and saved forward context"""
    kind: str
    inputs: Tuple["Tensor", ...]
    backward_fn: BackwardFn
    saved: Dict[str, Any] = field(default_factory=dict)

    @property
    def input_ids(self) -> Tuple[int, ...]:
        return tuple(id(t) for t in self.inputs)


class Tensor:
    """
    N-dimensional float64 array with an optional gradient slot.

    Data written by the producing op is treated as immutable; parameters are
    the only tensors updated in place, and only by the optimizer.
    """

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[OpNode] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise GradientError("item() needs a single-element tensor", self.shape)
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def backward(self):
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        from autodiff.ops import add
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from autodiff.ops import mul
        return mul(self, other)

    def __getitem__(self, index) -> "Tensor":
        from autodiff.ops import getitem
        return getitem(self, index)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def record(
    data: np.ndarray,
    inputs: Sequence[Tensor],
    kind: str,
    backward_fn: BackwardFn,
    saved: Optional[Dict[str, Any]] = None,
) -> Tensor:
    """Wrap an op result, attaching a graph node when any input needs gradients"""
    out = Tensor(data)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = OpNode(kind, tuple(inputs), backward_fn, saved or {})
    return out


def _reverse_topological(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    order.reverse()
    return order


def backward(loss: Tensor):
    """
    Populate ``grad`` on every leaf reachable from ``loss``.

    Gradients accumulate into existing buffers so several forward passes
    sharing parameters can be summed; call ``zero_grad`` between steps.
    """
    if loss.size != 1:
        raise GradientError("backward needs a single-element loss", loss.shape)
    if not loss.requires_grad:
        raise GradientError("loss does not depend on any tensor requiring gradients")

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for tensor in _reverse_topological(loss):
        grad = pending.pop(id(tensor), None)
        if grad is None:
            continue
        if tensor.node is None:
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
            continue
        input_grads = tensor.node.backward_fn(grad)
        for parent, parent_grad in zip(tensor.node.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent_grad.shape != parent.shape:
                raise GradientError(
                    f"{tensor.node.kind} produced gradient of shape {parent_grad.shape}",
                    parent.shape,
                )
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

"""
Differentiable operations used by the backbone and the consensus layer
"""

import logging
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autodiff.tensor import Tensor, as_tensor, record
from core.exceptions import ConfigError, LabelError, ShapeError

logger = logging.getLogger(__name__)

BN_MODES = ("train", "frozen", "eval")


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError("add operands do not broadcast", a.shape, b.shape) from None

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record(out, (a, b), "add", backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError("mul operands do not broadcast", a.shape, b.shape) from None

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record(out, (a, b), "mul", backward_fn)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    def backward_fn(g):
        return (np.full(x.shape, float(g)),)

    return record(np.asarray(x.data.sum()), (x,), "sum", backward_fn)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("cannot reshape", x.shape, tuple(shape)) from None

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return record(out, (x,), "reshape", backward_fn)


def getitem(x: Tensor, index) -> Tensor:
    out = np.array(x.data[index])

    def backward_fn(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, index, g)
        return (dx,)

    return record(out, (x,), "getitem", backward_fn)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward_fn(g):
        return (g * mask,)

    return record(x.data * mask, (x,), "relu", backward_fn, {"mask": mask})


def conv2d(x: Tensor, weight: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation of an NCHW batch with an OIKK kernel bank"""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects NCHW input and OIKK weight", x.shape, weight.shape)
    if stride < 1 or pad < 0:
        raise ConfigError(f"conv2d needs stride >= 1 and pad >= 0, got stride={stride} pad={pad}")
    n, c, h, w = x.shape
    o, i, kh, kw = weight.shape
    if c != i:
        raise ShapeError("conv2d input channels do not match weight", x.shape, weight.shape)
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d kernel larger than padded input", x.shape, weight.shape)

    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    windows = windows[:, :, :ho, :wo]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward_fn(g):
        grad_weight = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        cols = np.tensordot(g, weight.data, axes=([1], [0]))  # n, ho, wo, c, kh, kw
        grad_padded = np.zeros_like(padded)
        for di in range(kh):
            for dj in range(kw):
                grad_padded[:, :, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += (
                    cols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
                )
        grad_x = grad_padded[:, :, pad:pad + h, pad:pad + w]
        return np.ascontiguousarray(grad_x), grad_weight

    return record(out, (x, weight), "conv2d", backward_fn, {"stride": stride, "pad": pad})


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str = "train",
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Per-channel batch normalization of an NCHW tensor.

    train  -- normalize by batch statistics (population variance) and update
              the running buffers in place by exponential moving average,
              storing the unbiased variance.
    frozen -- normalize by running statistics; the buffers are never written.
    eval   -- same arithmetic as frozen, used at inference.
    """
    if mode not in BN_MODES:
        raise ConfigError(f"unknown batch_norm mode {mode!r}")
    if eps <= 0:
        raise ConfigError(f"batch_norm epsilon must be positive, got {eps}")
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError("batch_norm parameters do not match channels", x.shape, gamma.shape)

    n, c, h, w = x.shape
    axes = (0, 2, 3)
    count = n * h * w
    if mode == "train":
        if count < 2:
            raise ShapeError("batch_norm in train mode needs at least 2 values per channel", x.shape)
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean[...] = (1.0 - momentum) * running_mean + momentum * mean
        running_var[...] = (1.0 - momentum) * running_var + momentum * var * count / (count - 1)
    else:
        mean = running_mean.copy()
        var = running_var.copy()

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * x_hat + beta.data[None, :, None, None]

    def backward_fn(g):
        grad_gamma = (g * x_hat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        scaled = g * gamma.data[None, :, None, None]
        if mode == "train":
            grad_x = (inv_std[None, :, None, None] / count) * (
                count * scaled
                - scaled.sum(axis=axes)[None, :, None, None]
                - x_hat * (scaled * x_hat).sum(axis=axes)[None, :, None, None]
            )
        else:
            grad_x = scaled * inv_std[None, :, None, None]
        return grad_x, grad_gamma, grad_beta

    saved = {"mode": mode, "mean": mean, "var": var}
    return record(out, (x, gamma, beta), "batch_norm", backward_fn, saved)


def dropout(
    x: Tensor,
    drop_prob: float,
    mode: str = "train",
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so eval is the identity"""
    if not 0.0 <= drop_prob < 1.0:
        raise ConfigError(f"drop_prob must lie in [0, 1), got {drop_prob}")
    if mode == "eval" or drop_prob == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in train mode needs a random generator")
    mask = (rng.random(x.shape) >= drop_prob) / (1.0 - drop_prob)

    def backward_fn(g):
        return (g * mask,)

    return record(x.data * mask, (x,), "dropout", backward_fn, {"mask": mask})


def max_pool2d(x: Tensor, kernel: int = 2, stride: Optional[int] = None) -> Tensor:
    """Max pooling; ties go to the lowest linear index inside each window"""
    stride = stride or kernel
    if x.ndim != 4:
        raise ShapeError("max_pool2d expects NCHW input", x.shape)
    n, c, h, w = x.shape
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"max_pool2d kernel {kernel} larger than input", x.shape)

    windows = sliding_window_view(x.data, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = windows[:, :, :ho, :wo].reshape(n, c, ho, wo, kernel * kernel)
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        grad_x = np.zeros_like(x.data)
        ni, ci, hi, wi = np.indices((n, c, ho, wo))
        rows = hi * stride + argmax // kernel
        cols = wi * stride + argmax % kernel
        np.add.at(grad_x, (ni, ci, rows, cols), g)
        return (grad_x,)

    return record(out, (x,), "max_pool2d", backward_fn, {"argmax": argmax})


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeError("global_avg_pool expects NCHW input", x.shape)
    _, _, h, w = x.shape

    def backward_fn(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),)

    return record(x.data.mean(axis=(2, 3)), (x,), "global_avg_pool", backward_fn)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Fully connected layer: x @ weight.T + bias with weight of shape (out, in)"""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError("affine input does not match weight", x.shape, weight.shape)
    if bias.shape != (weight.shape[0],):
        raise ShapeError("affine bias does not match weight", bias.shape, weight.shape)

    def backward_fn(g):
        return g @ weight.data, g.T @ x.data, g.sum(axis=0)

    return record(x.data @ weight.data.T + bias.data, (x, weight, bias), "affine", backward_fn)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, labels: Union[Sequence[int], np.ndarray]) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label], max-shift stabilized"""
    if logits.ndim != 2:
        raise ShapeError("softmax_cross_entropy expects (N, C) logits", logits.shape)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError("one label per row expected", logits.shape, labels.shape)
    if np.any(labels < 0) or np.any(labels >= c):
        raise LabelError(f"labels {labels.tolist()} outside [0, {c})")

    log_probs = log_softmax(logits.data)
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()

    def backward_fn(g):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (grad * (float(g) / n),)

    return record(np.asarray(loss), (logits,), "softmax_cross_entropy", backward_fn)

"""
Segmental consensus, the video-level loss on the consensus, and the
aggregated parameter gradient across the K snippets of a video.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, backward, record
from core.exceptions import ConfigError, GradientError, LabelError, ShapeError
from core.models import ConsensusKind
from network.backbone import BackboneModel

logger = logging.getLogger(__name__)


@dataclass
class ScoreMatrix:
    """
    Snippet scores F(T_k; W) stacked on axis -2 (shape ``(..., K, C)``), the
    consensus G (shape ``(..., C)``) and what backward needs.
    """
    scores: np.ndarray
    consensus: np.ndarray
    kind: ConsensusKind
    argmax_rows: Optional[np.ndarray] = None

    @property
    def num_segments(self) -> int:
        return self.scores.shape[-2]


def _coefficients(kind: ConsensusKind, num_segments: int) -> Optional[np.ndarray]:
    if kind.name == "weighted" and len(kind.weights) != num_segments:
        raise ConfigError(f"{len(kind.weights)} consensus weights for {num_segments} segments")
    return kind.coefficients(num_segments)


def consensus_forward(scores: np.ndarray, kind: ConsensusKind) -> ScoreMatrix:
    """Class-wise aggregation over the segment axis: mean, max or weighted sum"""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim < 2 or scores.shape[-2] < 1:
        raise ShapeError("consensus expects scores of shape (..., K, C) with K >= 1", scores.shape)
    num_segments = scores.shape[-2]
    if kind.name == "max":
        argmax = scores.argmax(axis=-2)  # first occurrence: ties go to the lowest segment
        consensus = np.take_along_axis(scores, argmax[..., None, :], axis=-2)[..., 0, :]
        return ScoreMatrix(scores, consensus, kind, argmax)
    weights = _coefficients(kind, num_segments)
    if kind.name == "avg":
        consensus = scores.mean(axis=-2)
    else:
        consensus = np.einsum("k,...kc->...c", weights, scores)
    return ScoreMatrix(scores, consensus, kind)


def consensus_backward(grad_consensus: np.ndarray, saved: ScoreMatrix) -> np.ndarray:
    """dL/dScores from dL/dG; Max routes the whole gradient to the argmax segment"""
    grad_consensus = np.asarray(grad_consensus, dtype=np.float64)
    if grad_consensus.shape != saved.consensus.shape:
        raise ShapeError("consensus gradient shape mismatch", grad_consensus.shape, saved.consensus.shape)
    num_segments = saved.num_segments
    kind = saved.kind
    if kind.name == "max":
        if saved.argmax_rows is None:
            raise GradientError("max consensus backward needs the saved argmax rows")
        grad = np.zeros_like(saved.scores)
        np.put_along_axis(grad, saved.argmax_rows[..., None, :], grad_consensus[..., None, :], axis=-2)
        return grad
    weights = _coefficients(kind, num_segments)
    return weights[:, None] * grad_consensus[..., None, :]


def segment_consensus(scores: Tensor, kind: ConsensusKind) -> Tensor:
    """Autodiff op: (B, K, C) snippet scores -> (B, C) consensus"""
    saved = consensus_forward(scores.data, kind)

    def backward_fn(g):
        return (consensus_backward(g, saved),)

    return record(saved.consensus, (scores,), f"consensus_{kind.name}", backward_fn, {"matrix": saved})


def tsn_loss(consensus: np.ndarray, label: int) -> float:
    """Softmax cross-entropy on the consensus: -(G_y - log sum_j exp G_j)"""
    consensus = np.asarray(consensus, dtype=np.float64)
    if not 0 <= label < consensus.shape[-1]:
        raise LabelError(f"label {label} outside [0, {consensus.shape[-1]})")
    return float(-ops.log_softmax(consensus)[label])


def tsn_loss_grad(consensus: np.ndarray, label: int) -> np.ndarray:
    """dL/dG = softmax(G) - onehot(label); sums to zero over classes"""
    consensus = np.asarray(consensus, dtype=np.float64)
    if not 0 <= label < consensus.shape[-1]:
        raise LabelError(f"label {label} outside [0, {consensus.shape[-1]})")
    grad = np.exp(ops.log_softmax(consensus))
    grad[label] -= 1.0
    return grad


def tsn_forward(
    model: BackboneModel,
    batch: np.ndarray,
    labels: Sequence[int],
    kind: ConsensusKind,
    mode: str = "train",
) -> Tuple[Tensor, Tensor]:
    """
    Run all B x K snippets through the shared parameters in one pass, reduce
    each video's K score rows by the consensus, and return (mean loss, G).
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 5:
        raise ShapeError("tsn batch must be (B, K, C, H, W)", batch.shape)
    num_videos, num_segments = batch.shape[:2]
    scores = model.forward(batch.reshape((num_videos * num_segments,) + batch.shape[2:]), mode)
    scores = ops.reshape(scores, (num_videos, num_segments, model.num_classes))
    consensus = segment_consensus(scores, kind)
    loss = ops.softmax_cross_entropy(consensus, labels)
    return loss, consensus


@dataclass
class TSNStepResult:
    loss: float
    gradients: Dict[str, np.ndarray]
    consensus: np.ndarray


def tsn_step(
    model: BackboneModel,
    snippets: Union[Sequence[np.ndarray], np.ndarray],
    label: int,
    kind: ConsensusKind,
    mode: str = "train",
) -> TSNStepResult:
    """One video: K forwards through the same W, one consensus, one loss, summed gradients"""
    stacked = np.stack([np.asarray(s, dtype=np.float64) for s in snippets])
    model.zero_grad()
    loss, consensus = tsn_forward(model, stacked[None], [label], kind, mode)
    backward(loss)
    gradients = {name: p.grad.copy() for name, p in model.parameters().items()}
    return TSNStepResult(loss.item(), gradients, consensus.data[0].copy())

"""
Class visualization by gradient ascent on the network input
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml
from scipy import ndimage

from autodiff.tensor import Tensor, backward
from core.exceptions import ConfigError
from data.tensor_io import VERSION_F32, write_tensor
from network.backbone import BackboneModel

logger = logging.getLogger(__name__)

INPUT_RANGE = (-0.5, 0.5)


@dataclass
class Visualization:
    image: np.ndarray
    scores: List[float] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def save(self, path: Union[str, Path]) -> Path:
        """Image as a tensor file plus a YAML sidecar with the trace and settings"""
        path = Path(path)
        write_tensor(path, self.image, VERSION_F32)
        sidecar = path.with_suffix(".yaml")
        with open(sidecar, "w") as f:
            yaml.safe_dump({**self.metadata, "scores": [float(s) for s in self.scores]}, f, sort_keys=True)
        return path


def class_score_gradient(model: BackboneModel, image: np.ndarray, class_index: int):
    """Raw score of ``class_index`` for one input and its gradient w.r.t. the input"""
    x = Tensor(image[None], requires_grad=True)
    scores = model.forward(x, "eval")
    target = scores[0, class_index]
    backward(target)
    return target.item(), x.grad[0]


def visualize_class(
    model: BackboneModel,
    class_index: int,
    iterations: int = 200,
    step_size: float = 1.0,
    blur_sigma: float = 0.5,
    blur_every: int = 10,
    noise_std: float = 0.1,
    seed: int = 0,
    metadata: Optional[Dict[str, Any]] = None,
) -> Visualization:
    """
    Start from Gaussian noise and repeatedly step along the input gradient of
    the class score. Steps are scaled by the mean absolute gradient; every
    ``blur_every`` iterations the image is Gaussian-blurred spatially
    (``blur_every=0`` disables it). The image stays inside the normalized
    input range throughout.
    """
    if not 0 <= class_index < model.num_classes:
        raise ConfigError(f"class {class_index} outside [0, {model.num_classes})")
    if iterations < 0 or step_size <= 0 or blur_every < 0 or blur_sigma < 0:
        raise ConfigError("iterations and blur_every must be >= 0, step_size > 0, blur_sigma >= 0")

    rng = np.random.default_rng(seed)
    low, high = INPUT_RANGE
    image = np.clip(rng.normal(0.0, noise_std, model.input_shape), low, high)
    trace: List[float] = []
    for iteration in range(iterations):
        score, grad = class_score_gradient(model, image, class_index)
        trace.append(score)
        scale = float(np.abs(grad).mean())
        if scale > 0:
            image = np.clip(image + step_size * grad / scale, low, high)
        if blur_every and blur_sigma > 0 and (iteration + 1) % blur_every == 0:
            image = ndimage.gaussian_filter(image, sigma=(0.0, blur_sigma, blur_sigma), mode="nearest")
    final, _ = class_score_gradient(model, image, class_index)
    trace.append(final)

    info = {
        "class": class_index,
        "iterations": iterations,
        "step_size": step_size,
        "blur_sigma": blur_sigma,
        "blur_every": blur_every,
        "noise_std": noise_std,
        "seed": seed,
        "input_shape": list(model.input_shape),
        "final_score": final,
        **(metadata or {}),
    }
    logger.info(f"🎨 Class {class_index}: score {trace[0]:.3f} -> {final:.3f} over {iterations} iterations")
    return Visualization(image, trace, info)


def dominant_direction(flow_image: np.ndarray) -> float:
    """Angle in degrees (from +x towards +y) of the mean displacement of a flow input u1, v1, u2, v2, ..."""
    if flow_image.ndim != 3 or flow_image.shape[0] % 2:
        raise ConfigError(f"flow input needs an even channel count, got shape {flow_image.shape}")
    u = float(flow_image[0::2].mean())
    v = float(flow_image[1::2].mean())
    return float(np.degrees(np.arctan2(v, u)) % 360.0)


def angle_between(a: float, b: float) -> float:
    diff = abs(a - b) % 360.0
    return min(diff, 360.0 - diff)

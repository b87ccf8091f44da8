"""
Corner cropping with scale jittering for training, and ten-crop for testing.

Stacks are (C, H, W) float arrays at the 256x340 source size. Flow stacks
order channels u1, v1, u2, v2, ... and must be zero-centred so that a
horizontal flip can negate the x-displacement channels.
"""

import logging
from typing import List

import numpy as np
from scipy import ndimage

from core.exceptions import ShapeError
from core.models import CROP_SIDES, OUTPUT_SIDE, SOURCE_HEIGHT, SOURCE_WIDTH, CropPosition, CropSpec

logger = logging.getLogger(__name__)

POSITIONS = (
    CropPosition.TOP_LEFT,
    CropPosition.TOP_RIGHT,
    CropPosition.BOTTOM_LEFT,
    CropPosition.BOTTOM_RIGHT,
    CropPosition.CENTER,
)


def _check_source(stack: np.ndarray):
    if stack.ndim != 3 or stack.shape[1:] != (SOURCE_HEIGHT, SOURCE_WIDTH):
        raise ShapeError("augmentation expects a (C, 256, 340) stack", stack.shape, (-1, SOURCE_HEIGHT, SOURCE_WIDTH))


def resize_bilinear(stack: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-centre aligned bilinear resampling of every channel"""
    channels, h, w = stack.shape
    if (h, w) == (out_h, out_w):
        return np.array(stack, dtype=np.float64)
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    grid = np.stack(np.meshgrid(ys, xs, indexing="ij"))
    out = np.empty((channels, out_h, out_w))
    for c in range(channels):
        ndimage.map_coordinates(stack[c], grid, output=out[c], order=1, mode="nearest")
    return out


def flip_horizontal(stack: np.ndarray, flow: bool = False) -> np.ndarray:
    """Mirror left-right; for flow stacks also negate the horizontal components"""
    flipped = np.array(stack[:, :, ::-1], dtype=np.float64)
    if flow:
        flipped[0::2] *= -1.0
    return flipped


def apply_crop(stack: np.ndarray, spec: CropSpec, flow: bool = False) -> np.ndarray:
    top, left = spec.offsets()
    window = stack[:, top:top + spec.crop_h, left:left + spec.crop_w]
    out = resize_bilinear(window, spec.output_side, spec.output_side)
    return flip_horizontal(out, flow) if spec.flip else out


def random_crop_spec(
    rng: np.random.Generator,
    output_side: int = OUTPUT_SIDE,
    aspect_jitter: bool = False,
) -> CropSpec:
    """Side from {256, 224, 192, 168}, one of five positions, flip with probability 0.5"""
    crop_h = CROP_SIDES[int(rng.integers(len(CROP_SIDES)))]
    crop_w = CROP_SIDES[int(rng.integers(len(CROP_SIDES)))] if aspect_jitter else crop_h
    position = POSITIONS[int(rng.integers(len(POSITIONS)))]
    flip = bool(rng.random() < 0.5)
    return CropSpec(crop_h, crop_w, position, flip, output_side=output_side)


def augment_train(
    stack: np.ndarray,
    rng: np.random.Generator,
    flow: bool = False,
    output_side: int = OUTPUT_SIDE,
    aspect_jitter: bool = False,
) -> np.ndarray:
    """Corner crop + scale jitter + random flip, resized to ``output_side`` squared"""
    _check_source(stack)
    spec = random_crop_spec(rng, output_side, aspect_jitter)
    return apply_crop(stack, spec, flow)


def tencrop_specs(crop_side: int = OUTPUT_SIDE, output_side: int = OUTPUT_SIDE) -> List[CropSpec]:
    plain = [CropSpec(crop_side, crop_side, p, False, output_side=output_side) for p in POSITIONS]
    flipped = [CropSpec(crop_side, crop_side, p, True, output_side=output_side) for p in POSITIONS]
    return plain + flipped


def tencrop(stack: np.ndarray, flow: bool = False, output_side: int = OUTPUT_SIDE) -> List[np.ndarray]:
    """4 corners, centre, then the 5 mirrored counterparts, all at crop side 224"""
    _check_source(stack)
    plain = [apply_crop(stack, spec, flow) for spec in tencrop_specs(OUTPUT_SIDE, output_side)[:5]]
    return plain + [flip_horizontal(view, flow) for view in plain]

"""
Network inputs for the four modalities: RGB, stacked RGB difference, stacked
optical flow and stacked warped optical flow.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ConfigError, ShapeError
from core.models import FlowField, Homography, Modality, VideoClip
from preprocessing.homography import RansacConfig, estimate_homography, warp_compensate

logger = logging.getLogger(__name__)

DEFAULT_FLOW_BOUND = 20.0
HOMOGRAPHY_SOURCES = ("metadata", "estimate")


def rgb_diff_stack(frames: Sequence[np.ndarray]) -> np.ndarray:
    """Signed differences frame(t+1) - frame(t) of L+1 frames, stacked to (3L, H, W)"""
    if len(frames) < 2:
        raise ShapeError(f"RGB difference needs at least 2 frames, got {len(frames)}")
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    for frame in frames[1:]:
        if frame.shape != frames[0].shape:
            raise ShapeError("RGB difference frames differ in size", frames[0].shape, frame.shape)
    return np.concatenate([later - earlier for earlier, later in zip(frames[:-1], frames[1:])])


def rgb_diff_to_bytes(stack: np.ndarray) -> np.ndarray:
    """Byte-image export: shift by +128 and clamp"""
    return np.clip(np.asarray(stack) + 128.0, 0.0, 255.0).round()


def discretize_flow(flow: FlowField, bound: float = DEFAULT_FLOW_BOUND) -> Tuple[np.ndarray, np.ndarray]:
    """Clamp to [-bound, bound] and map linearly onto bytes: round((x + b) * 255 / 2b)"""
    if bound <= 0:
        raise ConfigError(f"flow bound must be positive, got {bound}")

    def encode(component: np.ndarray) -> np.ndarray:
        clipped = np.clip(component, -bound, bound)
        return np.floor((clipped + bound) * 255.0 / (2.0 * bound) + 0.5).astype(np.uint8)

    return encode(flow.u), encode(flow.v)


def undiscretize_flow(values: np.ndarray, bound: float = DEFAULT_FLOW_BOUND) -> np.ndarray:
    """Inverse of the byte map; error is at most bound/255 inside the clamp range"""
    return np.asarray(values, dtype=np.float64) * (2.0 * bound) / 255.0 - bound


def flow_stack(
    flows: Sequence[FlowField],
    warped: bool = False,
    homographies: Optional[Sequence[Homography]] = None,
    bound: float = DEFAULT_FLOW_BOUND,
    rng: Optional[np.random.Generator] = None,
    ransac: Optional[RansacConfig] = None,
) -> np.ndarray:
    """
    Byte-discretized (2L, H, W) stack ordered u1, v1, u2, v2, ...

    The warped variant compensates each field by its camera homography before
    discretization; homographies are estimated with ``rng`` when not given.
    """
    if len(flows) < 1:
        raise ShapeError("flow stack needs at least one flow field")
    for flow in flows[1:]:
        if flow.shape != flows[0].shape:
            raise ShapeError("flow fields differ in size", flows[0].shape, flow.shape)
    if warped and homographies is not None and len(homographies) != len(flows):
        raise ShapeError(f"{len(homographies)} homographies for {len(flows)} flow fields")

    channels: List[np.ndarray] = []
    for index, flow in enumerate(flows):
        if warped:
            if homographies is not None:
                homography = homographies[index]
            else:
                if rng is None:
                    raise ConfigError("estimating homographies needs a random generator")
                homography = estimate_homography(flow, rng, ransac)
            flow = warp_compensate(flow, homography)
        u, v = discretize_flow(flow, bound)
        channels.extend([u, v])
    return np.stack(channels)


def normalize_rgb(frames: np.ndarray) -> np.ndarray:
    return np.asarray(frames, dtype=np.float64) / 255.0 - 0.5


def normalize_flow_bytes(stack: np.ndarray) -> np.ndarray:
    return np.asarray(stack, dtype=np.float64) / 255.0 - 0.5


def build_snippet(
    clip: VideoClip,
    modality: Modality,
    start: int,
    snippet_length: int,
    bound: float = DEFAULT_FLOW_BOUND,
    homography_source: str = "metadata",
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Normalized network input (C, H, W) for the snippet starting at ``start``.

    RGB frames map to x/255 - 0.5, RGB differences to d/255, and flow stacks
    to byte/255 - 0.5, centring every modality near 0.
    """
    if homography_source not in HOMOGRAPHY_SOURCES:
        raise ConfigError(f"homography_source must be one of {HOMOGRAPHY_SOURCES}")
    if modality is Modality.RGB:
        frames = [clip.frame(start + i) for i in range(snippet_length)]
        return normalize_rgb(np.concatenate(frames))
    if modality is Modality.RGB_DIFF:
        frames = [clip.frame(start + i) for i in range(snippet_length + 1)]
        return rgb_diff_stack(frames) / 255.0

    flows = [clip.flow(start + i) for i in range(snippet_length)]
    homographies = None
    if modality is Modality.WARPED_FLOW and homography_source == "metadata" and clip.camera is not None:
        homographies = [clip.camera_homography(start + i) for i in range(snippet_length)]
    stack = flow_stack(
        flows,
        warped=modality is Modality.WARPED_FLOW,
        homographies=homographies,
        bound=bound,
        rng=rng,
    )
    return normalize_flow_bytes(stack)

"""
Segment partitioning and snippet selection for training and testing
"""

import logging
from typing import List

import numpy as np

from core.exceptions import ConfigError, ShapeError
from core.models import SegmentPlan

logger = logging.getLogger(__name__)

DEFAULT_SEGMENTS = 3
DEFAULT_TEST_SNIPPETS = 25


def partition_segments(num_frames: int, num_segments: int = DEFAULT_SEGMENTS) -> SegmentPlan:
    """K half-open ranges [floor(kT/K), floor((k+1)T/K)) of near-equal duration"""
    if num_segments < 1:
        raise ConfigError(f"need at least one segment, got {num_segments}")
    if num_frames < num_segments:
        raise ShapeError(f"cannot split {num_frames} frames into {num_segments} segments")
    ranges = [
        (k * num_frames // num_segments, (k + 1) * num_frames // num_segments)
        for k in range(num_segments)
    ]
    return SegmentPlan(num_frames, ranges)


def sample_train(plan: SegmentPlan, snippet_length: int, rng: np.random.Generator) -> List[int]:
    """
    One start per segment, uniform over the starts whose whole snippet of
    ``snippet_length`` units stays inside that segment.
    """
    if snippet_length < 1:
        raise ConfigError(f"snippet length must be >= 1, got {snippet_length}")
    starts = []
    for index, (begin, end) in enumerate(plan.ranges):
        last = min(end, plan.num_frames) - snippet_length
        if last < begin:
            raise ShapeError(
                f"segment {index} [{begin}, {end}) is shorter than snippet length {snippet_length}"
            )
        starts.append(int(rng.integers(begin, last + 1)))
    plan.starts = starts
    return starts


def sample_test(num_frames: int, count: int = DEFAULT_TEST_SNIPPETS, snippet_length: int = 1) -> List[int]:
    """Equally spaced, centred starts: floor((i + 0.5) * (T - L + 1) / count)"""
    if count < 1:
        raise ConfigError(f"test snippet count must be >= 1, got {count}")
    if num_frames < snippet_length:
        raise ShapeError(f"video of {num_frames} units is shorter than snippet length {snippet_length}")
    span = num_frames - snippet_length + 1
    # integer form of floor((i + 0.5) * span / count)
    return [((2 * i + 1) * span) // (2 * count) for i in range(count)]

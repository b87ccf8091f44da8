"""
Data models shared across the TSN desk toolkit
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ConfigError, DegenerateInputError, ShapeError


class Modality(Enum):
    """Network input modalities"""
    RGB = "rgb"
    RGB_DIFF = "rgbdiff"
    FLOW = "flow"
    WARPED_FLOW = "warpedflow"

    @property
    def is_motion(self) -> bool:
        return self is not Modality.RGB

    @property
    def is_flow(self) -> bool:
        return self in (Modality.FLOW, Modality.WARPED_FLOW)

    @property
    def default_snippet_length(self) -> int:
        return 1 if self is Modality.RGB else 5

    @property
    def default_dropout(self) -> float:
        # appearance streams overfit faster than motion streams
        return 0.8 if self is Modality.RGB else 0.7

    def channels(self, snippet_length: int) -> int:
        return 2 * snippet_length if self.is_flow else 3 * snippet_length

    def units(self, num_frames: int) -> int:
        """Number of sampleable positions: frames for RGB, frame pairs otherwise"""
        return num_frames if self is Modality.RGB else num_frames - 1

    @classmethod
    def parse(cls, value: str) -> "Modality":
        try:
            return cls(value.lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown modality {value!r} (choose from {choices})") from None


CONSENSUS_NAMES = ("avg", "max", "weighted")


@dataclass(frozen=True)
class ConsensusKind:
    """Aggregation function g applied class-wise over the K snippet scores"""
    name: str = "avg"
    weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.name not in CONSENSUS_NAMES:
            raise ConfigError(f"unknown consensus {self.name!r} (choose from {', '.join(CONSENSUS_NAMES)})")
        if self.name == "weighted":
            if not self.weights:
                raise ConfigError("weighted consensus needs explicit weights")
            w = np.asarray(self.weights, dtype=np.float64)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ConfigError(f"consensus weights must be non-negative and sum to 1, got {self.weights}")

    @classmethod
    def even_average(cls) -> "ConsensusKind":
        return cls("avg")

    @classmethod
    def maximum(cls) -> "ConsensusKind":
        return cls("max")

    @classmethod
    def weighted(cls, weights: Sequence[float]) -> "ConsensusKind":
        return cls("weighted", tuple(float(w) for w in weights))

    @classmethod
    def parse(cls, name: str, num_segments: int, weights: Optional[Sequence[float]] = None) -> "ConsensusKind":
        """Build from a config name; weighted defaults to uniform weights"""
        if name == "weighted":
            if weights is None:
                weights = [1.0 / num_segments] * num_segments
            return cls.weighted(weights)
        return cls(name)

    def coefficients(self, num_segments: int) -> Optional[np.ndarray]:
        if self.name == "avg":
            return np.full(num_segments, 1.0 / num_segments)
        if self.name == "weighted":
            return np.asarray(self.weights, dtype=np.float64)
        return None


@dataclass
class SegmentPlan:
    """K contiguous segments partitioning [0, T) and the snippet start chosen in each"""
    num_frames: int
    ranges: List[Tuple[int, int]]
    starts: Optional[List[int]] = None

    @property
    def num_segments(self) -> int:
        return len(self.ranges)

    def lengths(self) -> List[int]:
        return [end - begin for begin, end in self.ranges]

    def to_dict(self) -> Dict[str, Any]:
        return {"num_frames": self.num_frames, "ranges": self.ranges, "starts": self.starts}


class CropPosition(Enum):
    TOP_LEFT = "top_left"
    TOP_RIGHT = "top_right"
    BOTTOM_LEFT = "bottom_left"
    BOTTOM_RIGHT = "bottom_right"
    CENTER = "center"


SOURCE_HEIGHT = 256
SOURCE_WIDTH = 340
CROP_SIDES = (256, 224, 192, 168)
OUTPUT_SIDE = 224


@dataclass(frozen=True)
class CropSpec:
    """One crop window on a 256x340 source, resized to a square output"""
    crop_h: int
    crop_w: int
    position: CropPosition
    flip: bool = False
    source_h: int = SOURCE_HEIGHT
    source_w: int = SOURCE_WIDTH
    output_side: int = OUTPUT_SIDE

    def __post_init__(self):
        if not (0 < self.crop_h <= self.source_h and 0 < self.crop_w <= self.source_w):
            raise ShapeError(
                "crop window must lie inside the source",
                (self.crop_h, self.crop_w), (self.source_h, self.source_w),
            )

    def offsets(self) -> Tuple[int, int]:
        """(top, left) of the window; corners touch their image corner"""
        dh = self.source_h - self.crop_h
        dw = self.source_w - self.crop_w
        return {
            CropPosition.TOP_LEFT: (0, 0),
            CropPosition.TOP_RIGHT: (0, dw),
            CropPosition.BOTTOM_LEFT: (dh, 0),
            CropPosition.BOTTOM_RIGHT: (dh, dw),
            CropPosition.CENTER: (dh // 2, dw // 2),
        }[self.position]


@dataclass
class FlowField:
    """Per-pixel displacement in pixels: u along x (columns), v along y (rows)"""
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ShapeError("flow components must be equal-shaped 2-D maps", self.u.shape, self.v.shape)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape

    def as_array(self) -> np.ndarray:
        return np.stack([self.u, self.v])

    @classmethod
    def from_array(cls, array: np.ndarray) -> "FlowField":
        array = np.asarray(array)
        if array.ndim != 3 or array.shape[0] != 2:
            raise ShapeError("flow array must have shape (2, H, W)", array.shape)
        return cls(array[0], array[1])

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))


@dataclass
class Homography:
    """3x3 projective map on pixel coordinates (x, y), normalized so H[2, 2] = 1"""
    matrix: np.ndarray
    inlier_ratio: Optional[float] = None

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.shape != (3, 3):
            raise ShapeError("homography must be 3x3", matrix.shape)
        if abs(matrix[2, 2]) < 1e-12:
            raise DegenerateInputError("homography has a vanishing (3,3) element")
        matrix = matrix / matrix[2, 2]
        if abs(np.linalg.det(matrix)) <= 1e-9:
            raise DegenerateInputError("homography is singular")
        self.matrix = matrix

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) points given as (x, y)"""
        points = np.asarray(points, dtype=np.float64)
        homogeneous = np.concatenate([points, np.ones((points.shape[0], 1))], axis=1) @ self.matrix.T
        return homogeneous[:, :2] / homogeneous[:, 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def compose(self, other: "Homography") -> "Homography":
        """self after other"""
        return Homography(self.matrix @ other.matrix)

    def displacement_field(self, height: int, width: int) -> FlowField:
        """Flow induced on the pixel grid: H(p) - p"""
        ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
        points = np.stack([xs.ravel(), ys.ravel()], axis=1)
        moved = self.apply(points) - points
        return FlowField(moved[:, 0].reshape(height, width), moved[:, 1].reshape(height, width))

    def to_row(self) -> List[float]:
        return [float(x) for x in self.matrix.ravel()]


@dataclass
class VideoClip:
    """Ordered frames (3, H, W) in [0, 255], optional ground-truth flow and a label"""
    video_id: str
    label: int
    num_frames: int
    frame_fn: Callable[[int], np.ndarray]
    flow_fn: Optional[Callable[[int], FlowField]] = None
    camera: Optional[List[Homography]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def frame(self, t: int) -> np.ndarray:
        if not 0 <= t < self.num_frames:
            raise IndexError(f"frame {t} outside video {self.video_id} of {self.num_frames} frames")
        return self.frame_fn(t)

    def flow(self, t: int) -> FlowField:
        """Flow from frame t to frame t + 1"""
        if self.flow_fn is None:
            raise ConfigError(f"video {self.video_id} carries no flow fields")
        if not 0 <= t < self.num_frames - 1:
            raise IndexError(f"flow {t} outside video {self.video_id} of {self.num_frames} frames")
        return self.flow_fn(t)

    def camera_homography(self, t: int) -> Optional[Homography]:
        if self.camera is None:
            return None
        return self.camera[t]

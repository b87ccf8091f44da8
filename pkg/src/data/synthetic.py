"""
Synthetic staged-motion videos with exact ground-truth flow.

Each class is an ordered list of motion stages. A textured actor moves with
the current stage's velocity over a textured background while the camera
moves by a per-frame-pair homography; background flow is the homography's
displacement field and actor flow is the stage velocity, both exact.
"""

import logging
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from scipy import ndimage

from core import __version__
from core.exceptions import ConfigError, GenerationError
from core.models import FlowField, Homography, VideoClip
from data.dataset import (
    CAMERA_FILE, FLOW_PATTERN, FRAME_PATTERN, VideoDataset, write_camera, write_meta,
)
from data.splits import SplitEntry, SplitList, write_split
from data.tensor_io import VERSION_F32, VERSION_U8, write_tensor
from utils.workers import ordered_map

logger = logging.getLogger(__name__)

# angles measured from +x towards +y; image rows grow downwards
DIRECTIONS = {"right": 0.0, "down": 90.0, "left": 180.0, "up": 270.0}
SHAPES = ("rect", "disk")
SPLIT_CODES = {"train": 0, "test": 1}


@dataclass(frozen=True)
class StagePrimitive:
    """Constant-velocity motion of the actor for one stage of a video"""
    direction: Union[str, float] = "right"
    speed: float = 2.0
    shape: str = "rect"

    def __post_init__(self):
        if isinstance(self.direction, str) and self.direction not in DIRECTIONS:
            raise ConfigError(f"unknown direction {self.direction!r} (choose from {', '.join(DIRECTIONS)})")
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown actor shape {self.shape!r}")
        if self.speed < 0:
            raise ConfigError(f"stage speed must be >= 0, got {self.speed}")

    @property
    def angle_degrees(self) -> float:
        if isinstance(self.direction, str):
            return DIRECTIONS[self.direction]
        return float(self.direction) % 360.0

    def velocity(self) -> Tuple[float, float]:
        angle = np.deg2rad(self.angle_degrees)
        vx, vy = self.speed * np.cos(angle), self.speed * np.sin(angle)
        # snap axis-aligned motion to exact values
        return float(np.round(vx, 12)), float(np.round(vy, 12))

    def key(self) -> Tuple[float, float, str]:
        return (self.angle_degrees, float(self.speed), self.shape)


def _default_classes() -> Dict[str, List[StagePrimitive]]:
    right, up = StagePrimitive("right"), StagePrimitive("up")
    return {
        "right-then-up": [right, up],
        "up-then-right": [up, right],
        "right-then-down": [right, StagePrimitive("down")],
        "up-then-left": [up, StagePrimitive("left")],
    }


@dataclass
class SyntheticSpec:
    """Class definitions and rendering parameters of a synthetic dataset"""
    classes: Dict[str, List[StagePrimitive]] = field(default_factory=_default_classes)
    frames_per_video: int = 24
    height: int = 256
    width: int = 340
    actor_size: int = 40
    camera_translation: float = 1.5
    camera_scale: float = 0.0
    camera_projective: float = 0.0
    texture_seed: int = 7
    train_videos_per_class: int = 50
    test_videos_per_class: int = 25
    flow_bound: float = 20.0

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def class_names(self) -> List[str]:
        return list(self.classes)

    def stages(self, label: int) -> List[StagePrimitive]:
        return self.classes[self.class_names[label]]

    def order_pairs(self) -> List[Tuple[int, int]]:
        """Class pairs with the same multiset of stages in a different order"""
        keys = [[s.key() for s in self.stages(c)] for c in range(self.num_classes)]
        pairs = []
        for i in range(self.num_classes):
            for j in range(i + 1, self.num_classes):
                if sorted(keys[i]) == sorted(keys[j]) and keys[i] != keys[j]:
                    pairs.append((i, j))
        return pairs

    def validate(self):
        if self.num_classes < 2:
            raise ConfigError("synthetic dataset needs at least two classes")
        if any(len(stages) < 1 for stages in self.classes.values()):
            raise ConfigError("every class needs at least one stage")
        if self.frames_per_video < 2:
            raise ConfigError("videos need at least two frames")
        if self.actor_size < 1 or self.actor_size > min(self.height, self.width):
            raise ConfigError(f"actor size {self.actor_size} does not fit the frame")
        if not self.order_pairs():
            raise ConfigError("no pair of classes shares the same stages in a different order")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["classes"] = {
            name: [{"direction": s.direction, "speed": s.speed, "shape": s.shape} for s in stages]
            for name, stages in self.classes.items()
        }
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SyntheticSpec":
        data = dict(data or {})
        if "classes" in data:
            data["classes"] = {
                name: [StagePrimitive(**stage) for stage in stages]
                for name, stages in data["classes"].items()
            }
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid synthetic spec: {e}") from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SyntheticSpec":
        with open(path, "r") as f:
            return cls.from_dict(yaml.safe_load(f))

    def save(self, path: Union[str, Path]):
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, default_flow_style=False, sort_keys=False)


def _texture(rng: np.random.Generator, shape: Tuple[int, int], sigma: float, low: float, high: float) -> np.ndarray:
    noise = ndimage.gaussian_filter(rng.random((3,) + shape), sigma=(0, sigma, sigma))
    noise -= noise.min()
    noise /= max(noise.max(), 1e-12)
    return low + (high - low) * noise


class SyntheticVideo:
    """Deterministic realization of one video from the spec and its seeds"""

    def __init__(self, spec: SyntheticSpec, label: int, video_id: str, rng: np.random.Generator,
                 texture_rng: np.random.Generator):
        self.spec = spec
        self.label = label
        self.video_id = video_id
        self._texture_rng = texture_rng
        frames = spec.frames_per_video
        stages = spec.stages(label)
        self.stage_of_pair = [t * len(stages) // (frames - 1) for t in range(frames - 1)]
        self.velocities = np.array([stages[s].velocity() for s in self.stage_of_pair])
        self.shapes = [stages[s].shape for s in self.stage_of_pair]
        self.shapes.append(self.shapes[-1])

        offsets = np.vstack([np.zeros(2), np.cumsum(self.velocities, axis=0)])
        extent = np.array([spec.width, spec.height], dtype=np.float64) - spec.actor_size
        low = np.ceil(-offsets.min(axis=0))
        high = np.floor(extent - offsets.max(axis=0))
        if np.any(high < low):
            raise GenerationError(
                f"class {spec.class_names[label]!r}: actor of size {spec.actor_size} travels "
                f"{np.ptp(offsets, axis=0).tolist()} px and leaves the {spec.width}x{spec.height} frame"
            )
        start = np.array([rng.integers(low[0], high[0] + 1), rng.integers(low[1], high[1] + 1)], dtype=np.float64)
        self.positions = start + offsets  # top-left (x, y) per frame

        self.camera = [self._sample_camera(rng) for _ in range(frames - 1)]
        cumulative = [np.eye(3)]
        for homography in self.camera:
            cumulative.append(homography.matrix @ cumulative[-1])
        self._world_from_frame = [np.linalg.inv(c) for c in cumulative]

    def _sample_camera(self, rng: np.random.Generator) -> Homography:
        spec = self.spec
        tx, ty = rng.uniform(-spec.camera_translation, spec.camera_translation, 2) if spec.camera_translation else (0.0, 0.0)
        scale = rng.uniform(-spec.camera_scale, spec.camera_scale) if spec.camera_scale else 0.0
        px, py = rng.uniform(-spec.camera_projective, spec.camera_projective, 2) if spec.camera_projective else (0.0, 0.0)
        return Homography(np.array([[1.0 + scale, 0.0, tx], [0.0, 1.0 + scale, ty], [px, py, 1.0]]))

    @cached_property
    def background(self) -> np.ndarray:
        return _texture(self._texture_rng, (self.spec.height, self.spec.width), 4.0, 40.0, 160.0)

    @cached_property
    def actor_texture(self) -> np.ndarray:
        size = self.spec.actor_size
        return _texture(self._texture_rng, (size, size), 1.5, 150.0, 255.0)

    @cached_property
    def _grid(self) -> Tuple[np.ndarray, np.ndarray]:
        ys, xs = np.mgrid[0:self.spec.height, 0:self.spec.width]
        return xs.astype(np.float64), ys.astype(np.float64)

    def actor_mask(self, t: int) -> np.ndarray:
        xs, ys = self._grid
        left, top = self.positions[t]
        size = self.spec.actor_size
        if self.shapes[t] == "disk":
            cx, cy = left + size / 2.0, top + size / 2.0
            return (xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2 <= (size / 2.0) ** 2
        return (xs >= left) & (xs < left + size) & (ys >= top) & (ys < top + size)

    def frame(self, t: int) -> np.ndarray:
        """(3, H, W) frame with integral values in [0, 255]"""
        xs, ys = self._grid
        world = self._world_from_frame[t]
        if np.allclose(world, np.eye(3), atol=0.0):
            image = self.background.copy()
        else:
            w = world[2, 0] * xs + world[2, 1] * ys + world[2, 2]
            wx = (world[0, 0] * xs + world[0, 1] * ys + world[0, 2]) / w
            wy = (world[1, 0] * xs + world[1, 1] * ys + world[1, 2]) / w
            coords = np.stack([wy, wx])
            image = np.stack([
                ndimage.map_coordinates(channel, coords, order=1, mode="reflect")
                for channel in self.background
            ])
        mask = self.actor_mask(t)
        left, top = self.positions[t]
        local = np.stack([ys[mask] - top, xs[mask] - left])
        for c in range(3):
            image[c][mask] = ndimage.map_coordinates(self.actor_texture[c], local, order=1, mode="nearest")
        return np.clip(np.round(image), 0.0, 255.0)

    def flow(self, t: int) -> FlowField:
        """Exact displacement from frame t to frame t + 1"""
        field = self.camera[t].displacement_field(self.spec.height, self.spec.width)
        mask = self.actor_mask(t)
        field.u[mask] = self.velocities[t, 0]
        field.v[mask] = self.velocities[t, 1]
        return field

    def to_clip(self) -> VideoClip:
        return VideoClip(
            video_id=self.video_id,
            label=self.label,
            num_frames=self.spec.frames_per_video,
            frame_fn=self.frame,
            flow_fn=self.flow,
            camera=self.camera,
            metadata={"stages": [s.key() for s in self.spec.stages(self.label)]},
        )


class SyntheticDataset(VideoDataset):
    """Renders one split of a synthetic dataset on demand, without touching disk"""

    def __init__(self, spec: SyntheticSpec, seed: int = 0, split: str = "train"):
        spec.validate()
        if split not in SPLIT_CODES:
            raise ConfigError(f"unknown split {split!r}")
        self.spec = spec
        self.seed = seed
        self.split = split
        self.num_classes = spec.num_classes
        self.flow_bound = spec.flow_bound
        per_class = spec.train_videos_per_class if split == "train" else spec.test_videos_per_class
        self._labels = [c for c in range(spec.num_classes) for _ in range(per_class)]

    def __len__(self) -> int:
        return len(self._labels)

    def labels(self) -> List[int]:
        return list(self._labels)

    def video_id(self, index: int) -> str:
        return f"{self.split}_{index:05d}"

    def video(self, index: int) -> SyntheticVideo:
        code = SPLIT_CODES[self.split]
        return SyntheticVideo(
            self.spec,
            self._labels[index],
            self.video_id(index),
            np.random.default_rng([self.seed, code, index]),
            np.random.default_rng([self.spec.texture_seed, code, index]),
        )

    def clip(self, index: int) -> VideoClip:
        return self.video(index).to_clip()

    def split_list(self) -> SplitList:
        return SplitList([SplitEntry(self.video_id(i), label) for i, label in enumerate(self._labels)], self.split)


def _write_video(root: Path, video: SyntheticVideo):
    frame_dir = root / "videos" / video.video_id
    flow_dir = root / "flow" / video.video_id
    for t in range(video.spec.frames_per_video):
        write_tensor(frame_dir / FRAME_PATTERN.format(t), video.frame(t), VERSION_U8)
    for t in range(video.spec.frames_per_video - 1):
        write_tensor(flow_dir / FLOW_PATTERN.format(t), video.flow(t).as_array(), VERSION_F32)
    write_camera(flow_dir / CAMERA_FILE, video.camera)


def generate(spec: SyntheticSpec, seed: int, out_dir: Union[str, Path], workers: Optional[int] = None) -> Path:
    """Materialize both splits of the dataset under ``out_dir``"""
    spec.validate()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    logger.info(f"🎬 Generating synthetic dataset ({spec.num_classes} classes) into {root}")

    header = f"tsn-desk {__version__} seed={seed}"
    for split in SPLIT_CODES:
        dataset = SyntheticDataset(spec, seed, split)
        ordered_map(lambda i: _write_video(root, dataset.video(i)), range(len(dataset)), workers, progress=f"gen {split}")
        write_split(root / "splits" / f"{split}.txt", dataset.split_list(), header)

    (root / "labels.txt").write_text("".join(f"{i} {name}\n" for i, name in enumerate(spec.class_names)))
    spec.save(root / "synthetic.yaml")
    write_meta(root / "meta.txt", {
        "version": __version__,
        "generator": "synthetic-staged-motion",
        "seed": seed,
        "flow_bound": spec.flow_bound,
        "height": spec.height,
        "width": spec.width,
        "frames_per_video": spec.frames_per_video,
        "num_classes": spec.num_classes,
    })
    logger.info(f"✅ Dataset written to {root}")
    return root

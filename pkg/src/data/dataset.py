"""
Video datasets: the common interface and the on-disk directory reader.

Layout of a dataset root::

    videos/<id>/frame_%05d.tsnt   (3, H, W) u8 frames
    flow/<id>/flow_%05d.tsnt      (2, H, W) f32 flow from frame t to t+1
    flow/<id>/camera.txt          one 3x3 camera homography per frame pair
    labels.txt                    `index name` per class
    splits/{train,test}.txt
    meta.txt                      key=value (flow_bound, height, width, seed, ...)
"""

import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

import numpy as np

from core.exceptions import ConfigError
from core.models import FlowField, Homography, VideoClip
from data.splits import load_split
from data.tensor_io import read_tensor

logger = logging.getLogger(__name__)

FRAME_PATTERN = "frame_{:05d}.tsnt"
FLOW_PATTERN = "flow_{:05d}.tsnt"
CAMERA_FILE = "camera.txt"


def write_meta(path: Union[str, Path], values: Dict[str, object]) -> Path:
    path = Path(path)
    path.write_text("".join(f"{key}={values[key]}\n" for key in sorted(values)))
    return path


def read_meta(path: Union[str, Path]) -> Dict[str, str]:
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"meta line is not key=value: {line!r}")
        values[key.strip()] = value.strip()
    return values


def read_camera(path: Union[str, Path]) -> List[Homography]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append(Homography(np.array([float(x) for x in line.split()]).reshape(3, 3)))
    return rows


def write_camera(path: Union[str, Path], homographies: List[Homography]) -> Path:
    path = Path(path)
    path.write_text("".join(" ".join(repr(x) for x in h.to_row()) + "\n" for h in homographies))
    return path


class VideoDataset(ABC):
    """Indexed collection of labelled clips"""

    num_classes: int
    flow_bound: float

    @abstractmethod
    def __len__(self) -> int:
        ...

    @abstractmethod
    def clip(self, index: int) -> VideoClip:
        ...

    @abstractmethod
    def labels(self) -> List[int]:
        ...

    def __getitem__(self, index: int) -> VideoClip:
        return self.clip(index)

    def __iter__(self) -> Iterator[VideoClip]:
        for index in range(len(self)):
            yield self.clip(index)


class DirectoryDataset(VideoDataset):
    """Lazily reads one split of a dataset directory"""

    def __init__(self, root: Union[str, Path], split: str = "train"):
        self.root = Path(root)
        meta_path = self.root / "meta.txt"
        if not meta_path.exists():
            raise FileNotFoundError(f"Dataset metadata not found: {meta_path}")
        self.meta = read_meta(meta_path)
        try:
            self.num_classes = int(self.meta["num_classes"])
            self.flow_bound = float(self.meta["flow_bound"])
            self.num_frames = int(self.meta["frames_per_video"])
        except KeyError as e:
            raise ConfigError(f"meta.txt misses key {e}") from None
        self.split = load_split(self.root / "splits" / f"{split}.txt", self.num_classes)
        if len(self.split) == 0:
            raise ConfigError(f"split {split!r} of {self.root} is empty")
        logger.info(f"📂 Dataset {self.root} [{split}]: {len(self.split)} videos, {self.num_classes} classes")

    def __len__(self) -> int:
        return len(self.split)

    def labels(self) -> List[int]:
        return self.split.labels()

    def clip(self, index: int) -> VideoClip:
        entry = self.split.entries[index]
        video_id = Path(entry.path).name
        frame_dir = self.root / "videos" / video_id
        flow_dir = self.root / "flow" / video_id

        def frame(t: int) -> np.ndarray:
            return read_tensor(frame_dir / FRAME_PATTERN.format(t))

        def flow(t: int) -> FlowField:
            return FlowField.from_array(read_tensor(flow_dir / FLOW_PATTERN.format(t)))

        camera: Optional[List[Homography]] = None
        if (flow_dir / CAMERA_FILE).exists():
            camera = read_camera(flow_dir / CAMERA_FILE)
        has_flow = flow_dir.exists()
        return VideoClip(
            video_id=video_id,
            label=entry.label,
            num_frames=self.num_frames,
            frame_fn=frame,
            flow_fn=flow if has_flow else None,
            camera=camera,
        )

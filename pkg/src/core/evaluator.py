"""
Test protocol and multi-stream fusion.

Each stream scores a video on equally spaced test snippets, ten crops per
snippet, and averages the raw class scores over all views. Streams are then
combined by a weighted sum before any softmax, and the argmax is the
prediction.
"""

import logging
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from autodiff.tensor import no_grad
from core.exceptions import ConfigError, ShapeError
from core.models import Modality, VideoClip
from data.dataset import VideoDataset
from network.backbone import BackboneModel
from network.checkpoint import load_checkpoint
from preprocessing.augmentation import apply_crop, tencrop, tencrop_specs
from preprocessing.modality import build_snippet
from preprocessing.sampling import DEFAULT_TEST_SNIPPETS, sample_test
from utils.workers import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_WEIGHTS = {"spatial": 1.0, "flow": 1.5, "warped": 0.5}
THREE_STREAM_WEIGHTS = {"spatial": 1.0, "flow": 1.0, "warped": 0.5}


@dataclass
class FusionSpec:
    """Per-stream weights of the pre-softmax score sum"""
    weights: Dict[str, float]

    def __post_init__(self):
        if not self.weights:
            raise ConfigError("fusion needs at least one stream")
        if any(w < 0 for w in self.weights.values()):
            raise ConfigError(f"fusion weights must be >= 0, got {self.weights}")
        if not any(w > 0 for w in self.weights.values()):
            raise ConfigError("at least one fusion weight must be positive")

    def echo(self) -> str:
        return ",".join(f"{name}:{weight!r}" for name, weight in self.weights.items())


@dataclass
class Stream:
    """One trained network and how to feed it"""
    name: str
    model: BackboneModel
    modality: Modality
    snippet_length: int
    flow_bound: Optional[float] = None

    @classmethod
    def from_checkpoint(cls, name: str, path: Union[str, Path]) -> "Stream":
        checkpoint = load_checkpoint(path)
        modality = Modality.parse(checkpoint.modality)
        meta = checkpoint.metadata
        return cls(
            name=name,
            model=checkpoint.model,
            modality=modality,
            snippet_length=int(meta.get("snippet_length", modality.default_snippet_length)),
            flow_bound=meta.get("flow_bound"),
        )


def parse_stream_arg(text: str, default_weights: Optional[Dict[str, float]] = None):
    """`NAME=CKPT[:WEIGHT]` -> (name, path, weight); the weight falls back to the name's default"""
    name, sep, rest = text.partition("=")
    if not sep or not name or not rest:
        raise ConfigError(f"stream must read NAME=CKPT[:WEIGHT], got {text!r}")
    path, colon, weight_text = rest.rpartition(":")
    if colon:
        try:
            return name, path, float(weight_text)
        except ValueError:
            pass
    weights = default_weights or DEFAULT_WEIGHTS
    if name not in weights:
        raise ConfigError(f"no default fusion weight for stream {name!r}; pass NAME=CKPT:WEIGHT")
    return name, rest, float(weights[name])


def parse_streams(
    texts: Sequence[str],
    two_stream: Optional[Dict[str, float]] = None,
    three_stream: Optional[Dict[str, float]] = None,
):
    """
    Parse every `--stream` argument. Streams without an explicit weight take
    the three-stream defaults once spatial, flow and warped are all present.
    """
    names = {text.partition("=")[0] for text in texts}
    if {"spatial", "flow", "warped"} <= names:
        defaults = three_stream or THREE_STREAM_WEIGHTS
    else:
        defaults = two_stream or DEFAULT_WEIGHTS
    parsed = [parse_stream_arg(text, defaults) for text in texts]
    seen = [name for name, _, _ in parsed]
    if len(set(seen)) != len(seen):
        raise ConfigError(f"stream names must be unique, got {seen}")
    return parsed


def video_scores(
    stream: Stream,
    clip: VideoClip,
    test_snippets: int = DEFAULT_TEST_SNIPPETS,
    ten_crop: bool = True,
    flow_bound: float = 20.0,
    homography_source: str = "metadata",
) -> np.ndarray:
    """Mean raw class scores of one stream over every test view of ``clip``"""
    units = stream.modality.units(clip.num_frames)
    starts = sample_test(units, test_snippets, stream.snippet_length)
    rng = np.random.default_rng(zlib.crc32(clip.video_id.encode("utf-8")))
    output_side = stream.model.spec.input_size
    centre = tencrop_specs(output_side=output_side)[4]
    total = np.zeros(stream.model.num_classes)
    count = 0
    with no_grad():
        for start in starts:
            stack = build_snippet(
                clip, stream.modality, start, stream.snippet_length,
                bound=flow_bound, homography_source=homography_source, rng=rng,
            )
            if ten_crop:
                views = tencrop(stack, flow=stream.modality.is_flow, output_side=output_side)
            else:
                views = [apply_crop(stack, centre, flow=stream.modality.is_flow)]
            scores = stream.model.forward(np.stack(views), "eval").data
            total += scores.sum(axis=0)
            count += len(views)
    return total / count


@dataclass
class VideoResult:
    video_id: str
    label: int
    stream_scores: Dict[str, np.ndarray]
    fused: np.ndarray

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.fused))


@dataclass
class EvalResult:
    fusion: FusionSpec
    videos: List[VideoResult] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        if not self.videos:
            return 0.0
        return float(np.mean([v.prediction == v.label for v in self.videos]))

    def stream_accuracy(self, name: str) -> float:
        return float(np.mean([int(np.argmax(v.stream_scores[name])) == v.label for v in self.videos]))

    def dump(self, name: Optional[str] = None) -> "ScoreDump":
        """Fused scores, or the raw scores of stream ``name``"""
        rows = [v.fused if name is None else v.stream_scores[name] for v in self.videos]
        return ScoreDump(
            [v.video_id for v in self.videos],
            [v.label for v in self.videos],
            np.array(rows),
        )


def fuse_scores(scores: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Weighted sum of per-stream raw scores"""
    if len(scores) != len(weights):
        raise ConfigError(f"{len(weights)} weights for {len(scores)} score sets")
    shapes = {np.shape(s) for s in scores}
    if len(shapes) != 1:
        raise ShapeError("score sets differ in shape", *sorted(shapes))
    fused = np.zeros_like(np.asarray(scores[0], dtype=np.float64))
    for s, w in zip(scores, weights):
        fused = fused + w * np.asarray(s, dtype=np.float64)
    return fused


def evaluate(
    streams: Sequence[Stream],
    dataset: VideoDataset,
    fusion: FusionSpec,
    test_snippets: int = DEFAULT_TEST_SNIPPETS,
    ten_crop: bool = True,
    homography_source: str = "metadata",
    workers: Optional[int] = None,
    progress: bool = True,
) -> EvalResult:
    """Score every video with every stream and fuse; results are sorted by video id"""
    start_time = time.time()
    if not streams:
        raise ConfigError("evaluation needs at least one stream")
    for stream in streams:
        if stream.model.num_classes != dataset.num_classes:
            raise ConfigError(
                f"stream {stream.name!r} predicts {stream.model.num_classes} classes, "
                f"dataset has {dataset.num_classes}"
            )
        if stream.name not in fusion.weights:
            raise ConfigError(f"no fusion weight for stream {stream.name!r}")
    names = [s.name for s in streams]
    if len(set(names)) != len(names):
        raise ConfigError(f"stream names must be unique, got {names}")

    def score(index: int) -> VideoResult:
        clip = dataset.clip(index)
        per_stream = {
            stream.name: video_scores(
                stream, clip, test_snippets, ten_crop,
                stream.flow_bound if stream.flow_bound is not None else dataset.flow_bound,
                homography_source,
            )
            for stream in streams
        }
        fused = fuse_scores(list(per_stream.values()), [fusion.weights[n] for n in per_stream])
        return VideoResult(clip.video_id, clip.label, per_stream, fused)

    videos = ordered_map(score, range(len(dataset)), workers, progress="eval" if progress else None)
    result = EvalResult(fusion, sorted(videos, key=lambda v: v.video_id))
    logger.info(
        f"📊 Evaluated {len(videos)} videos with streams {fusion.echo()}: "
        f"accuracy {result.accuracy:.4f} ({time.time() - start_time:.2f}s)"
    )
    return result


@dataclass
class ScoreDump:
    """Per-video class scores as written to a score TSV"""
    video_ids: List[str]
    labels: List[int]
    scores: np.ndarray

    @property
    def accuracy(self) -> float:
        if not self.video_ids:
            return 0.0
        return float(np.mean(self.scores.argmax(axis=1) == np.asarray(self.labels)))

    def write(self, path: Union[str, Path], header: Sequence[str] = ()) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        num_classes = self.scores.shape[1] if self.scores.ndim == 2 else 0
        lines = [f"# {line}" for line in header]
        lines.append("# video_id\tlabel\t" + "\t".join(f"score_{c}" for c in range(num_classes)))
        for video_id, label, row in zip(self.video_ids, self.labels, self.scores):
            lines.append("\t".join([video_id, str(label)] + [repr(float(x)) for x in row]))
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "ScoreDump":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Score file not found: {path}")
        ids, labels, rows = [], [], []
        for line_number, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            try:
                ids.append(parts[0])
                labels.append(int(parts[1]))
                rows.append([float(x) for x in parts[2:]])
            except (IndexError, ValueError):
                raise ConfigError(f"{path}:{line_number}: malformed score line") from None
        if len({len(r) for r in rows}) > 1:
            raise ConfigError(f"{path}: rows carry different class counts")
        return cls(ids, labels, np.array(rows, dtype=np.float64))


def fuse(dumps: Sequence[ScoreDump], weights: Sequence[float]) -> ScoreDump:
    """Combine score dumps of the same videos; rows are matched by video id"""
    FusionSpec({str(i): float(w) for i, w in enumerate(weights)})
    if len(dumps) != len(weights):
        raise ConfigError(f"{len(weights)} weights for {len(dumps)} score files")
    reference = dumps[0]
    order = {video_id: i for i, video_id in enumerate(reference.video_ids)}
    aligned = []
    for dump in dumps:
        if set(dump.video_ids) != set(order):
            raise ConfigError("score files cover different videos")
        if dump.scores.shape[1:] != reference.scores.shape[1:]:
            raise ConfigError("score files disagree on the number of classes")
        rows = np.empty_like(reference.scores)
        for video_id, label, row in zip(dump.video_ids, dump.labels, dump.scores):
            if label != reference.labels[order[video_id]]:
                raise ConfigError(f"video {video_id} has conflicting labels across score files")
            rows[order[video_id]] = row
        aligned.append(rows)
    return ScoreDump(list(reference.video_ids), list(reference.labels), fuse_scores(aligned, weights))

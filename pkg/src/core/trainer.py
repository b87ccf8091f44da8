"""
TSN training loop: sample a video batch, draw K snippets per video, augment,
run the shared backbone, reduce by the segmental consensus and apply one
momentum-SGD step.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import yaml
from tqdm import tqdm

from autodiff import ops
from autodiff.tensor import backward
from core import __version__
from core.config import BackboneConfig, Config, TrainConfig
from core.exceptions import ConfigError, NumericalError
from core.models import ConsensusKind, Modality, VideoClip
from core.optim import SGD, lr_at
from data.dataset import VideoDataset
from network.backbone import BackboneModel, build, cross_modality_init, set_partial_bn
from network.checkpoint import load_checkpoint, save_checkpoint
from network.consensus import tsn_forward
from preprocessing.augmentation import augment_train
from preprocessing.modality import build_snippet
from preprocessing.sampling import partition_segments, sample_train
from utils.workers import ordered_map

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.tsv"


@dataclass
class MetricsRow:
    step: int
    lr: float
    loss: float
    train_acc: float

    def to_line(self) -> str:
        return f"{self.step}\t{self.lr!r}\t{self.loss:.6f}\t{self.train_acc:.4f}"


@dataclass
class TrainResult:
    model: BackboneModel
    losses: List[float] = field(default_factory=list)
    metrics: List[MetricsRow] = field(default_factory=list)
    checkpoint: Optional[Path] = None


def reproducibility_header(command: str, seed: int, config: dict) -> List[str]:
    """Comment lines recording what produced an output file; no timestamps"""
    echo = yaml.safe_dump(config, default_flow_style=True, sort_keys=True, width=10**6).strip()
    return [f"tsn-desk {__version__} {command}", f"seed={seed}", f"config={echo}"]


def start_metrics(path: Union[str, Path], header: Sequence[str]) -> Path:
    """Create (or truncate) a metrics file holding only its header"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {line}" for line in header]
    lines.append("# step\tlr\tloss\ttrain_acc")
    path.write_text("\n".join(lines) + "\n")
    return path


def append_metrics(path: Union[str, Path], row: MetricsRow):
    with open(path, "a") as f:
        f.write(row.to_line() + "\n")


class Trainer:
    """
    Owns one backbone exclusively for the duration of a run.

    Every random draw is derived from the seed and the (step, sample) index,
    so results do not depend on how many worker threads build the batch.
    """

    def __init__(
        self,
        train: TrainConfig,
        dataset: VideoDataset,
        backbone: Optional[BackboneConfig] = None,
        homography_source: str = "metadata",
        workers: Optional[int] = None,
    ):
        train.validate()
        self.config = train
        self.dataset = dataset
        self.backbone_config = backbone or BackboneConfig()
        self.homography_source = homography_source
        self.workers = workers
        self.modality: Modality = train.modality_kind
        self.snippet_length = train.resolved_snippet_length
        self.consensus = ConsensusKind.parse(train.consensus, train.segments, train.consensus_weights)
        self.init_metadata: dict = {}
        self._check_dataset()
        self.model = self._prepare_model()
        self._check_norm_statistics()

    def _check_dataset(self):
        if len(self.dataset) == 0:
            raise ConfigError("training dataset is empty")
        if self.dataset.num_classes < 2:
            raise ConfigError(f"need at least two classes, dataset has {self.dataset.num_classes}")
        shortest = min(self.dataset.clip(i).num_frames for i in range(len(self.dataset)))
        units = self.modality.units(shortest)
        if self.modality.is_flow and self.dataset.clip(0).flow_fn is None:
            raise ConfigError(f"{self.modality.value} training needs flow fields in the dataset")
        plan = partition_segments(units, self.config.segments) if units >= self.config.segments else None
        if plan is None or min(plan.lengths()) < self.snippet_length:
            raise ConfigError(
                f"shortest video ({shortest} frames) cannot hold {self.config.segments} segments "
                f"of snippet length {self.snippet_length}"
            )

    def _check_norm_statistics(self):
        rows = self.config.batch_size * (1 if self.config.snippet_baseline else self.config.segments)
        for bn, size in zip(self.model.bns, self.model.spec.conv_sizes()):
            if not bn.frozen and rows * size * size < 2:
                raise ConfigError(
                    f"{bn.name} would normalize a single value per channel "
                    f"({rows} snippet(s) of {size}x{size}); raise batch_size or segments"
                )

    def _prepare_model(self) -> BackboneModel:
        channels = self.modality.channels(self.snippet_length)
        dropout = self.config.resolved_dropout
        if not self.config.init_from:
            spec = self.backbone_config.to_spec(channels, self.dataset.num_classes, dropout)
            return build(spec, np.random.default_rng(self.config.seed))

        checkpoint = load_checkpoint(self.config.init_from)
        source = checkpoint.model
        if source.num_classes != self.dataset.num_classes:
            raise ConfigError(
                f"init-from checkpoint has {source.num_classes} classes, dataset has {self.dataset.num_classes}"
            )
        if source.spec.input_channels == channels:
            model = source.clone()
        else:
            model = cross_modality_init(source, channels)
        model.spec = replace(model.spec, dropout_prob=dropout)
        model.spec.validate()
        if self.config.partial_bn:
            set_partial_bn(model, True)
        model.rng = np.random.default_rng(self.config.seed)
        self.init_metadata = {"init_from": str(self.config.init_from), "init_modality": checkpoint.modality}
        return model

    def _snippets(self, clip: VideoClip, rng: np.random.Generator) -> np.ndarray:
        units = self.modality.units(clip.num_frames)
        if self.config.snippet_baseline:
            starts = [int(rng.integers(0, units - self.snippet_length + 1))]
        else:
            starts = sample_train(partition_segments(units, self.config.segments), self.snippet_length, rng)
        views = []
        for start in starts:
            stack = build_snippet(
                clip, self.modality, start, self.snippet_length,
                bound=self.dataset.flow_bound, homography_source=self.homography_source, rng=rng,
            )
            views.append(augment_train(
                stack, rng, flow=self.modality.is_flow,
                output_side=self.backbone_config.input_size, aspect_jitter=self.config.aspect_jitter,
            ))
        return np.stack(views)

    def sample_batch(self, step: int):
        """Input tensor (B, K, C, S, S) and labels of one step"""
        order_rng = np.random.default_rng([self.config.seed, step])
        size = self.config.batch_size
        if size <= len(self.dataset):
            indices = order_rng.permutation(len(self.dataset))[:size]
        else:
            indices = order_rng.integers(0, len(self.dataset), size)

        def load(item):
            position, index = item
            rng = np.random.default_rng([self.config.seed, step, position])
            return self._snippets(self.dataset.clip(int(index)), rng)

        batch = np.stack(ordered_map(load, list(enumerate(indices)), self.workers))
        all_labels = self.dataset.labels()
        labels = [all_labels[int(i)] for i in indices]
        return batch, labels

    def train_step(self, optimizer: SGD, step: int):
        batch, labels = self.sample_batch(step)
        lr = lr_at(step, self.config.lr, self.config.lr_steps, self.config.lr_factor)
        optimizer.zero_grad()
        if self.config.snippet_baseline:
            scores = self.model.forward(batch[:, 0], "train")
            loss = ops.softmax_cross_entropy(scores, labels)
        else:
            loss, scores = tsn_forward(self.model, batch, labels, self.consensus, "train")
        if not loss.is_finite():
            raise NumericalError(f"non-finite loss {loss.item()} at step {step}")
        backward(loss)
        optimizer.step(lr)
        accuracy = float(np.mean(scores.data.argmax(axis=-1) == np.asarray(labels)))
        return loss.item(), accuracy, lr

    def run(self, out: Optional[Union[str, Path]] = None, progress: bool = True) -> TrainResult:
        start_time = time.time()
        optimizer = SGD(self.model.parameters(), self.config.momentum, self.config.weight_decay)
        result = TrainResult(self.model)
        window_loss, window_acc = [], []
        metrics_path = None
        if out is not None:
            header = reproducibility_header("train", self.config.seed, asdict(self.config))
            metrics_path = start_metrics(Path(out) / METRICS_FILE, header)
        logger.info(
            f"🚀 Training {self.modality.value} TSN: K={self.config.segments} consensus={self.consensus.name} "
            f"L={self.snippet_length} batch={self.config.batch_size} steps={self.config.max_iterations}"
        )
        for step in tqdm(range(self.config.max_iterations), desc="train", disable=not progress, leave=False):
            loss, accuracy, lr = self.train_step(optimizer, step)
            result.losses.append(loss)
            window_loss.append(loss)
            window_acc.append(accuracy)
            if (step + 1) % self.config.log_interval == 0 or step + 1 == self.config.max_iterations:
                row = MetricsRow(step + 1, lr, float(np.mean(window_loss)), float(np.mean(window_acc)))
                result.metrics.append(row)
                if metrics_path is not None:
                    append_metrics(metrics_path, row)
                logger.info(f"📈 step {row.step} lr {row.lr:g} loss {row.loss:.4f} acc {row.train_acc:.3f}")
                window_loss, window_acc = [], []

        if out is not None:
            result.checkpoint = self.save(out)
        logger.info(f"✅ Training finished in {time.time() - start_time:.2f} seconds")
        return result

    def metadata(self) -> dict:
        return {
            "version": __version__,
            "modality": self.modality.value,
            "segments": self.config.segments,
            "consensus": self.consensus.name,
            "snippet_length": self.snippet_length,
            "flow_bound": float(self.dataset.flow_bound),
            "seed": self.config.seed,
            "config": asdict(self.config),
            **self.init_metadata,
        }

    def save(self, out: Union[str, Path]) -> Path:
        return save_checkpoint(out, self.model, self.metadata())


def train(config: Config, dataset: VideoDataset, out: Optional[Union[str, Path]] = None,
          workers: Optional[int] = None, progress: bool = True) -> TrainResult:
    """Train one stream from a full configuration"""
    trainer = Trainer(config.train, dataset, config.backbone, config.data.homography_source, workers)
    return trainer.run(out, progress)

"""
Directional ablations on synthetic data: consensus function, number of
segments, the cross-modality / partial-BN training practices, and the
input modalities with their fused combinations.
"""

import logging
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from core.config import Config, TrainConfig
from core.evaluator import EvalResult, FusionSpec, Stream, evaluate, fuse_scores
from core.exceptions import ConfigError
from core.trainer import Trainer, reproducibility_header
from data.sources import open_dataset

logger = logging.getLogger(__name__)

STUDIES = ("consensus", "segments", "practices", "modalities")
DEFAULT_SEEDS = (0, 1, 2)
MOTION_MODALITIES = ("rgbdiff", "flow", "warpedflow")
# pre-softmax fusion weights per stream combination of the modalities study
MODALITY_COMBOS = (
    ("rgb", {"rgb": 1.0}),
    ("rgbdiff", {"rgbdiff": 1.0}),
    ("flow", {"flow": 1.0}),
    ("warpedflow", {"warpedflow": 1.0}),
    ("rgb+rgbdiff", {"rgb": 1.0, "rgbdiff": 1.5}),
    ("rgb+flow", {"rgb": 1.0, "flow": 1.5}),
    ("flow+warpedflow", {"flow": 1.0, "warpedflow": 0.5}),
    ("rgb+flow+warpedflow", {"rgb": 1.0, "flow": 1.0, "warpedflow": 0.5}),
    ("all", {"rgb": 1.0, "rgbdiff": 1.0, "flow": 1.0, "warpedflow": 0.5}),
)


@dataclass
class Variant:
    name: str
    overrides: Dict[str, Any] = field(default_factory=dict)
    rgb_init: bool = False


@dataclass
class AblationRow:
    variant: str
    seed: int
    accuracy: float


@dataclass
class AblationReport:
    study: str
    rows: List[AblationRow] = field(default_factory=list)

    def variants(self) -> List[str]:
        return list(dict.fromkeys(r.variant for r in self.rows))

    def mean_accuracy(self) -> Dict[str, float]:
        return {
            name: float(np.mean([r.accuracy for r in self.rows if r.variant == name]))
            for name in self.variants()
        }

    def to_lines(self) -> List[str]:
        lines = ["variant\tseed\taccuracy"]
        lines += [f"{r.variant}\t{r.seed}\t{r.accuracy:.4f}" for r in self.rows]
        lines += [f"{name}\tmean\t{acc:.4f}" for name, acc in self.mean_accuracy().items()]
        return lines

    def write(self, path: Union[str, Path], header: Sequence[str] = ()) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join([f"# {line}" for line in header] + self.to_lines()) + "\n")
        return path


def study_variants(study: str) -> List[Variant]:
    if study == "consensus":
        return [
            Variant("K1-avg", {"segments": 1, "consensus": "avg"}),
            Variant("K3-avg", {"segments": 3, "consensus": "avg"}),
            Variant("K3-max", {"segments": 3, "consensus": "max"}),
            Variant("K3-weighted", {"segments": 3, "consensus": "weighted",
                                    "consensus_weights": [0.25, 0.5, 0.25]}),
        ]
    if study == "segments":
        return [Variant(f"K{k}", {"segments": k}) for k in (1, 2, 3, 4)]
    if study == "practices":
        return [
            Variant("scratch"),
            Variant("cross-modality", rgb_init=True),
            Variant("cross-modality+partial-bn", {"partial_bn": True, "dropout": 0.7}, rgb_init=True),
        ]
    if study == "modalities":
        defaults = {"snippet_length": None, "dropout": None}
        return [Variant("rgb", {"modality": "rgb", "partial_bn": False, **defaults})] + [
            Variant(name, {"modality": name, "partial_bn": True, **defaults}, rgb_init=True)
            for name in MOTION_MODALITIES
        ]
    raise ConfigError(f"unknown study {study!r} (choose from {', '.join(STUDIES)})")


def combo_accuracy(result: EvalResult, weights: Dict[str, float]) -> float:
    """Accuracy of the weighted pre-softmax sum of some of the evaluated streams"""
    names = list(weights)
    hits = [
        int(np.argmax(fuse_scores([v.stream_scores[n] for n in names], [weights[n] for n in names]))) == v.label
        for v in result.videos
    ]
    return float(np.mean(hits)) if hits else 0.0


def run_ablation(
    study: str,
    config: Config,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    out_dir: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
) -> AblationReport:
    """
    Train and test every variant of ``study`` once per seed. The seed drives
    both the synthetic videos and the training run, so each seed is an
    independent replicate.

    The modalities study trains one stream per modality (motion streams start
    from that seed's RGB stream with partial BN), tests them together and
    reports every stream combination in ``MODALITY_COMBOS``.
    """
    base = config.train
    if study == "practices" and base.modality == "rgb":
        base = replace(base, modality="flow")
    variants = study_variants(study)
    report = AblationReport(study)

    with tempfile.TemporaryDirectory(prefix="tsn-ablation-") as scratch:
        for seed in seeds:
            data = replace(config.data, seed=config.data.seed + seed)
            train_set = open_dataset(data, "train")
            test_set = open_dataset(data, "test")
            rgb_checkpoint = None
            streams = []
            for variant in variants:
                train = replace(base, seed=seed, init_from=None, snippet_baseline=False, **variant.overrides)
                if variant.rgb_init:
                    if rgb_checkpoint is None:
                        rgb_checkpoint = _pretrain_rgb(base, seed, train_set, config, Path(scratch), workers)
                    train = replace(train, init_from=str(rgb_checkpoint))
                trainer = Trainer(train, train_set, config.backbone, data.homography_source, workers)
                keep = study == "modalities" and trainer.modality.value == "rgb"
                out = Path(scratch) / f"rgb-seed{seed}" if keep else None
                model = trainer.run(out, progress=False).model
                if keep:
                    rgb_checkpoint = out
                streams.append(Stream(variant.name, model, trainer.modality, trainer.snippet_length,
                                      train_set.flow_bound))
                if study == "modalities":
                    continue
                result = evaluate(
                    streams[-1:], test_set, FusionSpec({variant.name: 1.0}),
                    config.eval.test_snippets, config.eval.ten_crop, data.homography_source, workers,
                    progress=False,
                )
                report.rows.append(AblationRow(variant.name, seed, result.accuracy))
                logger.info(f"📐 {study} / {variant.name} / seed {seed}: accuracy {result.accuracy:.4f}")

            if study == "modalities":
                result = evaluate(
                    streams, test_set, FusionSpec({s.name: 1.0 for s in streams}),
                    config.eval.test_snippets, config.eval.ten_crop, data.homography_source, workers,
                    progress=False,
                )
                for name, weights in MODALITY_COMBOS:
                    accuracy = combo_accuracy(result, weights)
                    report.rows.append(AblationRow(name, seed, accuracy))
                    logger.info(f"📐 {study} / {name} / seed {seed}: accuracy {accuracy:.4f}")

    for name, accuracy in report.mean_accuracy().items():
        logger.info(f"📊 {study} {name}: mean accuracy {accuracy:.4f} over {len(seeds)} seeds")
    if out_dir is not None:
        header = reproducibility_header(f"ablate {study}", int(seeds[0]) if seeds else 0, asdict(config))
        report.write(Path(out_dir) / f"ablation_{study}.tsv", header)
    return report


def _pretrain_rgb(base: TrainConfig, seed: int, dataset, config: Config, scratch: Path, workers) -> Path:
    rgb = replace(
        base, modality="rgb", snippet_length=None, dropout=None, partial_bn=False,
        init_from=None, snippet_baseline=False, seed=seed,
    )
    trainer = Trainer(rgb, dataset, config.backbone, config.data.homography_source, workers)
    path = scratch / f"rgb-seed{seed}"
    trainer.run(path, progress=False)
    return path

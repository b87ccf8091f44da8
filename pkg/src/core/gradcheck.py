"""
Gradient-check harness: analytic parameter gradients of the full TSN loss
against central finite differences on a tiny backbone.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from autodiff.gradcheck import DEFAULT_STEP, numerical_gradient, relative_error
from autodiff.tensor import no_grad
from core.models import ConsensusKind
from network.backbone import BackboneModel, BackboneSpec, StageSpec, build
from network.consensus import consensus_forward, tsn_forward, tsn_step

logger = logging.getLogger(__name__)

PASS_THRESHOLD = 1e-5
TIE_TOLERANCE = 1e-6


def tiny_spec(num_classes: int = 3, input_channels: int = 3) -> BackboneSpec:
    return BackboneSpec(
        input_channels=input_channels,
        input_size=6,
        stages=[StageSpec(3, 3, 1, True), StageSpec(4, 3, 1, False)],
        dropout_prob=0.0,
        num_classes=num_classes,
    )


@dataclass
class LayerReport:
    layer: str
    max_error: float = 0.0
    skipped: bool = False


@dataclass
class GradcheckReport:
    consensus: str
    segments: int
    layers: Dict[str, LayerReport] = field(default_factory=dict)
    skipped_trials: int = 0
    trials: int = 0

    @property
    def max_error(self) -> float:
        errors = [r.max_error for r in self.layers.values() if not r.skipped]
        return max(errors) if errors else 0.0

    @property
    def checked_trials(self) -> int:
        return self.trials - self.skipped_trials

    @property
    def passed(self) -> bool:
        return self.max_error < PASS_THRESHOLD

    @property
    def status(self) -> str:
        if self.checked_trials == 0:
            return "SKIPPED"
        return "PASS" if self.passed else "FAIL"

    def to_lines(self) -> List[str]:
        lines = [
            f"consensus={self.consensus} K={self.segments} trials={self.trials} "
            f"skipped={self.skipped_trials} max_rel_error={self.max_error:.3e} {self.status}"
        ]
        for report in self.layers.values():
            state = "skipped" if report.skipped else f"{report.max_error:.3e}"
            lines.append(f"  {report.layer}\t{state}")
        return lines


def _layer_of(param_name: str) -> str:
    return param_name.split(".", 1)[0]


def at_max_tie(scores: np.ndarray, tolerance: float = TIE_TOLERANCE) -> bool:
    """Whether any class has two segments within ``tolerance`` of its maximum"""
    if scores.shape[-2] < 2:
        return False
    ordered = np.sort(scores, axis=-2)
    return bool(np.any(ordered[..., -1, :] - ordered[..., -2, :] < tolerance))


def check_video(
    model: BackboneModel,
    snippets: np.ndarray,
    label: int,
    kind: ConsensusKind,
    step: float = DEFAULT_STEP,
) -> Optional[Dict[str, float]]:
    """
    Per-parameter relative errors for one video, or None at a max-consensus
    tie where only a subgradient exists.
    """
    if kind.name == "max":
        with no_grad():
            scores = model.forward(snippets, "eval").data
        if at_max_tie(consensus_forward(scores, kind).scores):
            return None

    analytic = tsn_step(model, snippets, label, kind, mode="eval").gradients

    def loss() -> float:
        with no_grad():
            value, _ = tsn_forward(model, snippets[None], [label], kind, "eval")
        return value.item()

    errors = {}
    for name, param in model.parameters().items():
        numeric = numerical_gradient(loss, param.data, step)
        errors[name] = relative_error(analytic[name], numeric)
    return errors


def gradcheck(
    kind: ConsensusKind,
    segments: int = 3,
    trials: int = 2,
    seed: int = 0,
    num_classes: int = 3,
    step: float = DEFAULT_STEP,
    snippets: Optional[np.ndarray] = None,
) -> GradcheckReport:
    """
    Eval-mode BN (randomized running statistics) and no dropout, so the loss
    is a smooth function of the parameters away from ReLU, pooling and max
    consensus switching points.
    """
    rng = np.random.default_rng(seed)
    model = build(tiny_spec(num_classes), rng)
    for bn in model.bns:
        bn.running_mean[...] = rng.normal(0.0, 0.5, bn.running_mean.shape)
        bn.running_var[...] = rng.uniform(0.5, 2.0, bn.running_var.shape)
        bn.gamma.data[...] = rng.uniform(0.5, 1.5, bn.gamma.shape)
        bn.beta.data[...] = rng.normal(0.0, 0.2, bn.beta.shape)

    report = GradcheckReport(kind.name, segments)
    for name in model.parameters():
        report.layers.setdefault(_layer_of(name), LayerReport(_layer_of(name)))

    for trial in range(trials):
        video = snippets if snippets is not None else rng.normal(size=(segments,) + model.input_shape)
        report.trials += 1
        errors = check_video(model, video, trial % num_classes, kind, step)
        if errors is None:
            report.skipped_trials += 1
            logger.debug(f"trial {trial}: max consensus at a tie, skipped")
            continue
        for name, error in errors.items():
            layer = report.layers[_layer_of(name)]
            layer.max_error = max(layer.max_error, error)

    if report.checked_trials == 0:
        for layer in report.layers.values():
            layer.skipped = True
    logger.info(f"🧮 Gradcheck {kind.name} K={segments}: max relative error {report.max_error:.3e} {report.status}")
    return report

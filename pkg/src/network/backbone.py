"""
Desk-scale convolutional backbone F(.; W): conv+BN+ReLU stages, global average
pooling, dropout and an affine classification head.
"""

import copy
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from core.exceptions import ConfigError, ShapeError

logger = logging.getLogger(__name__)

MODES = ("train", "eval")


@dataclass(frozen=True)
class StageSpec:
    """One conv -> BN -> ReLU stage, optionally followed by 2x2 max pooling"""
    out_channels: int
    kernel: int = 3
    stride: int = 1
    pool: bool = True

    @property
    def pad(self) -> int:
        return self.kernel // 2

    def encode(self) -> str:
        return f"{self.out_channels}:{self.kernel}:{self.stride}:{int(self.pool)}"

    @classmethod
    def decode(cls, text: str) -> "StageSpec":
        try:
            out_channels, kernel, stride, pool = (int(part) for part in text.split(":"))
        except ValueError:
            raise ConfigError(f"stage must read out:kernel:stride:pool, got {text!r}") from None
        return cls(out_channels, kernel, stride, bool(pool))


def _desk_stages() -> List[StageSpec]:
    return [StageSpec(16, 3, 2, True), StageSpec(32, 3, 1, True), StageSpec(64, 3, 1, False)]


@dataclass
class BackboneSpec:
    """Architecture of the backbone; ``stages`` may be empty for a linear classifier"""
    input_channels: int = 3
    input_size: int = 64
    stages: List[StageSpec] = field(default_factory=_desk_stages)
    dropout_prob: float = 0.8
    num_classes: int = 4
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def conv_sizes(self) -> List[int]:
        """Spatial extent of each conv output, the map its batch norm sees"""
        size = self.input_size
        sizes = []
        for stage in self.stages:
            size = (size + 2 * stage.pad - stage.kernel) // stage.stride + 1
            sizes.append(size)
            if stage.pool:
                size //= 2
        return sizes

    def spatial_sizes(self) -> List[int]:
        """Spatial extent after each stage"""
        size = self.input_size
        sizes = []
        for stage in self.stages:
            size = (size + 2 * stage.pad - stage.kernel) // stage.stride + 1
            if stage.pool:
                size //= 2
            sizes.append(size)
        return sizes

    @property
    def feature_channels(self) -> int:
        return self.stages[-1].out_channels if self.stages else self.input_channels

    def validate(self):
        if self.input_channels < 1 or self.input_size < 1:
            raise ConfigError("backbone input channels and size must be positive")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ConfigError(f"dropout_prob must lie in [0, 1), got {self.dropout_prob}")
        for stage in self.stages:
            if stage.out_channels < 1 or stage.kernel < 1 or stage.stride < 1:
                raise ConfigError(f"invalid stage {stage}")
        sizes = self.spatial_sizes()
        if sizes and min(sizes) < 1:
            raise ConfigError(
                f"stages collapse the {self.input_size}px input below 1 pixel (sizes {sizes})"
            )

    def to_text(self) -> str:
        lines = [
            f"input_channels={self.input_channels}",
            f"input_size={self.input_size}",
            f"stages={','.join(s.encode() for s in self.stages)}",
            f"dropout_prob={self.dropout_prob!r}",
            f"num_classes={self.num_classes}",
            f"bn_momentum={self.bn_momentum!r}",
            f"bn_eps={self.bn_eps!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BackboneSpec":
        values: Dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"backbone spec line is not key=value: {line!r}")
            values[key.strip()] = value.strip()
        try:
            stages = [StageSpec.decode(s) for s in values["stages"].split(",") if s]
            return cls(
                input_channels=int(values["input_channels"]),
                input_size=int(values["input_size"]),
                stages=stages,
                dropout_prob=float(values["dropout_prob"]),
                num_classes=int(values["num_classes"]),
                bn_momentum=float(values.get("bn_momentum", 0.1)),
                bn_eps=float(values.get("bn_eps", 1e-5)),
            )
        except KeyError as e:
            raise ConfigError(f"backbone spec misses key {e}") from None

    def save(self, path: Union[str, Path]):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "BackboneSpec":
        return cls.from_text(Path(path).read_text())


class Conv2d:
    def __init__(self, name: str, in_channels: int, stage: StageSpec, rng: np.random.Generator):
        self.name = name
        self.stride = stage.stride
        self.pad = stage.pad
        fan_in = in_channels * stage.kernel * stage.kernel
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), (stage.out_channels, in_channels, stage.kernel, stage.kernel))
        self.weight = Tensor(weight, requires_grad=True, name=f"{name}.weight")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.stride, self.pad)


class BatchNorm2d:
    def __init__(self, name: str, channels: int, momentum: float, eps: float):
        self.name = name
        self.gamma = Tensor(np.ones(channels), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(channels), requires_grad=True, name=f"{name}.beta")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self.frozen = False

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        if mode == "eval":
            bn_mode = "eval"
        else:
            bn_mode = "frozen" if self.frozen else "train"
        return ops.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            bn_mode, self.momentum, self.eps,
        )


class Linear:
    def __init__(self, name: str, in_features: int, out_features: int, rng: np.random.Generator):
        self.name = name
        weight = rng.normal(0.0, np.sqrt(2.0 / in_features), (out_features, in_features))
        self.weight = Tensor(weight, requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(out_features), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.affine(x, self.weight, self.bias)


class BackboneModel:
    """
    Parameter set W shared by every snippet.

    The model owns the random generator driving its dropout masks so two
    models built from the same seed replay identical training runs.
    """

    def __init__(self, spec: BackboneSpec, rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        self.convs: List[Conv2d] = []
        self.bns: List[BatchNorm2d] = []
        channels = spec.input_channels
        for index, stage in enumerate(spec.stages, start=1):
            self.convs.append(Conv2d(f"conv{index}", channels, stage, rng))
            self.bns.append(BatchNorm2d(f"bn{index}", stage.out_channels, spec.bn_momentum, spec.bn_eps))
            channels = stage.out_channels
        self.head = Linear("fc", channels, spec.num_classes, rng)
        self.rng = np.random.default_rng(int(rng.integers(0, 2**63 - 1)))

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def input_shape(self):
        return (self.spec.input_channels, self.spec.input_size, self.spec.input_size)

    def _check_batch(self, batch: Tensor):
        expected = self.input_shape
        if batch.ndim != 4 or tuple(batch.shape[1:]) != expected:
            raise ShapeError("batch does not match backbone input", batch.shape, (-1,) + expected)

    def stem(self, batch: Union[Tensor, np.ndarray]) -> Tensor:
        """First-layer pre-activation response (conv1 output)"""
        batch = batch if isinstance(batch, Tensor) else Tensor(batch)
        self._check_batch(batch)
        if not self.convs:
            return batch
        return self.convs[0](batch)

    def forward(self, batch: Union[Tensor, np.ndarray], mode: str = "train") -> Tensor:
        """Raw (pre-softmax) class scores of shape (N, C)"""
        if mode not in MODES:
            raise ConfigError(f"unknown forward mode {mode!r}")
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        self._check_batch(x)
        for conv, bn, stage in zip(self.convs, self.bns, self.spec.stages):
            x = ops.relu(bn(conv(x), mode))
            if stage.pool:
                x = ops.max_pool2d(x, 2)
        x = ops.global_avg_pool(x)
        x = ops.dropout(x, self.spec.dropout_prob, mode, self.rng)
        return self.head(x)

    __call__ = forward

    def parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for conv, bn in zip(self.convs, self.bns):
            params[conv.weight.name] = conv.weight
            params[bn.gamma.name] = bn.gamma
            params[bn.beta.name] = bn.beta
        params[self.head.weight.name] = self.head.weight
        params[self.head.bias.name] = self.head.bias
        return params

    def buffers(self) -> Dict[str, np.ndarray]:
        buffers: Dict[str, np.ndarray] = {}
        for bn in self.bns:
            buffers[f"{bn.name}.running_mean"] = bn.running_mean
            buffers[f"{bn.name}.running_var"] = bn.running_var
        return buffers

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def zero_grad(self):
        for param in self.parameters().values():
            param.zero_grad()

    def freeze_flags(self) -> List[bool]:
        return [bn.frozen for bn in self.bns]

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.parameters().items()}
        state.update({name: b.copy() for name, b in self.buffers().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        params = self.parameters()
        buffers = self.buffers()
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise ConfigError(f"state misses entries: {sorted(missing)}")
        for name, value in state.items():
            target = params[name].data if name in params else buffers.get(name)
            if target is None:
                raise ConfigError(f"unexpected state entry {name!r}")
            if target.shape != np.shape(value):
                raise ShapeError(f"state entry {name} has wrong shape", np.shape(value), target.shape)
            target[...] = value

    def clone(self) -> "BackboneModel":
        return copy.deepcopy(self)


def build(spec: BackboneSpec, rng: np.random.Generator) -> BackboneModel:
    """He-initialized backbone; BN gamma=1, beta=0, running mean 0, var 1, all unfrozen"""
    model = BackboneModel(spec, rng)
    logger.debug(f"Built backbone with {model.num_parameters()} parameters, sizes {spec.spatial_sizes()}")
    return model


def cross_modality_init(source: BackboneModel, target_in_channels: int) -> BackboneModel:
    """
    Initialize a motion-input backbone from an RGB one: the first conv's weights
    are averaged over the three RGB channels and the average is replicated over
    ``target_in_channels``. Everything else, BN running statistics included, is
    copied verbatim.
    """
    if source.spec.input_channels != 3:
        raise ConfigError(
            f"cross-modality init needs a 3-channel RGB source, got {source.spec.input_channels} channels"
        )
    if target_in_channels < 1:
        raise ConfigError(f"target_in_channels must be >= 1, got {target_in_channels}")
    if not source.convs:
        raise ConfigError("cross-modality init needs a source with at least one conv layer")

    target = source.clone()
    target.spec = replace(source.spec, input_channels=target_in_channels)
    first = target.convs[0]
    mean = source.convs[0].weight.data.mean(axis=1, keepdims=True)
    first.weight = Tensor(np.repeat(mean, target_in_channels, axis=1), requires_grad=True, name=first.weight.name)
    for bn in target.bns:
        bn.frozen = False
    logger.info(f"🔁 Cross-modality init: 3 -> {target_in_channels} input channels")
    return target


def set_partial_bn(model: BackboneModel, enabled: bool):
    """Freeze running statistics of every BN layer except the first"""
    if not model.bns:
        raise ConfigError("partial BN needs at least one batch-norm layer")
    for index, bn in enumerate(model.bns):
        bn.frozen = enabled and index > 0
    logger.debug(f"Partial BN {'enabled' if enabled else 'disabled'}: flags {model.freeze_flags()}")


def load_model(spec: BackboneSpec, state: Dict[str, np.ndarray], seed: Optional[int] = 0) -> BackboneModel:
    model = build(spec, np.random.default_rng(seed))
    model.load_state_dict(state)
    return model

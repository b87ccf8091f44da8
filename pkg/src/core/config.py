"""
Configuration management for the TSN desk toolkit
"""

import yaml
from pathlib import Path
from dataclasses import dataclass, asdict, field, fields, replace
from typing import Any, Dict, List, Optional

from core.exceptions import ConfigError
from core.models import CONSENSUS_NAMES, Modality
from network.backbone import BackboneSpec, StageSpec


@dataclass
class DataConfig:
    """Where videos come from"""
    root: Optional[str] = None          # dataset directory; None renders synthetic videos in memory
    synthetic_spec: Optional[str] = None  # YAML SyntheticSpec for in-memory rendering
    seed: int = 0
    homography_source: str = "metadata"


@dataclass
class BackboneConfig:
    """Desk backbone architecture"""
    input_size: int = 64
    stages: str = "16:3:2:1,32:3:1:1,64:3:1:0"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def stage_specs(self) -> List[StageSpec]:
        return [StageSpec.decode(s) for s in self.stages.split(",") if s.strip()]

    def to_spec(self, input_channels: int, num_classes: int, dropout_prob: float) -> BackboneSpec:
        return BackboneSpec(
            input_channels=input_channels,
            input_size=self.input_size,
            stages=self.stage_specs(),
            dropout_prob=dropout_prob,
            num_classes=num_classes,
            bn_momentum=self.bn_momentum,
            bn_eps=self.bn_eps,
        )


@dataclass
class TrainConfig:
    """Optimizer, schedule and TSN training options"""
    modality: str = "rgb"
    segments: int = 3
    consensus: str = "avg"
    consensus_weights: Optional[List[float]] = None
    snippet_length: Optional[int] = None  # modality default when unset
    batch_size: int = 16
    momentum: float = 0.9
    lr: float = 0.01
    lr_steps: List[int] = field(default_factory=lambda: [300])
    lr_factor: float = 0.1
    max_iterations: int = 400
    dropout: Optional[float] = None  # modality default when unset
    weight_decay: float = 0.0
    partial_bn: bool = False
    init_from: Optional[str] = None
    aspect_jitter: bool = False
    log_interval: int = 10
    seed: int = 0
    snippet_baseline: bool = False

    @property
    def modality_kind(self) -> Modality:
        return Modality.parse(self.modality)

    @property
    def resolved_snippet_length(self) -> int:
        return self.snippet_length or self.modality_kind.default_snippet_length

    @property
    def resolved_dropout(self) -> float:
        return self.modality_kind.default_dropout if self.dropout is None else self.dropout

    def validate(self):
        Modality.parse(self.modality)
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.segments < 1:
            raise ConfigError(f"segments must be >= 1, got {self.segments}")
        if self.consensus not in CONSENSUS_NAMES:
            raise ConfigError(f"unknown consensus {self.consensus!r} (choose from {', '.join(CONSENSUS_NAMES)})")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if self.snippet_length is not None and self.snippet_length < 1:
            raise ConfigError("snippet_length must be >= 1")
        if not 0.0 <= self.resolved_dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.resolved_dropout}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.log_interval < 1:
            raise ConfigError("log_interval must be >= 1")
        if list(self.lr_steps) != sorted(self.lr_steps):
            raise ConfigError(f"lr_steps must be increasing, got {self.lr_steps}")
        if self.snippet_baseline and self.segments != 1:
            raise ConfigError("the snippet baseline trains one snippet per video (segments=1)")


@dataclass
class EvalConfig:
    """Test protocol"""
    test_snippets: int = 25
    ten_crop: bool = True
    fusion_weights: Dict[str, float] = field(
        default_factory=lambda: {"spatial": 1.0, "flow": 1.5, "warped": 0.5}
    )
    # used instead when a warped stream joins spatial and flow
    three_stream_weights: Dict[str, float] = field(
        default_factory=lambda: {"spatial": 1.0, "flow": 1.0, "warped": 0.5}
    )


@dataclass
class VisualizeConfig:
    """Gradient-ascent class visualization"""
    iterations: int = 200
    step_size: float = 1.0
    blur_sigma: float = 0.5
    blur_every: int = 10
    noise_std: float = 0.1
    seed: int = 0


PRESETS: Dict[str, Dict[str, Any]] = {
    "full-spatial": {
        "lr": 0.001, "lr_steps": [2000], "max_iterations": 4500, "batch_size": 256, "dropout": 0.8,
    },
    "full-temporal": {
        "lr": 0.005, "lr_steps": [12000, 18000], "max_iterations": 20000, "batch_size": 256, "dropout": 0.7,
    },
    "desk-spatial": {
        "lr": 0.01, "lr_steps": [300], "max_iterations": 400, "batch_size": 16, "dropout": 0.8,
    },
    "desk-temporal": {
        "lr": 0.01, "lr_steps": [300], "max_iterations": 400, "batch_size": 16, "dropout": 0.7,
    },
}


def apply_preset(train: TrainConfig, name: str) -> TrainConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    return replace(train, **PRESETS[name])


def _section(cls, data: Optional[Dict[str, Any]]):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass
class Config:
    """Main configuration class"""
    output_dir: str = "output"
    debug: bool = False

    data: DataConfig = None
    backbone: BackboneConfig = None
    train: TrainConfig = None
    eval: EvalConfig = None
    visualize: VisualizeConfig = None

    def __post_init__(self):
        if self.data is None:
            self.data = DataConfig()
        if self.backbone is None:
            self.backbone = BackboneConfig()
        if self.train is None:
            self.train = TrainConfig()
        if self.eval is None:
            self.eval = EvalConfig()
        if self.visualize is None:
            self.visualize = VisualizeConfig()

    @classmethod
    def load(cls, config_path: str = "configuration/default.yaml") -> "Config":
        """Load configuration from file; a missing file gives the defaults"""
        config_file = Path(config_path)

        if not config_file.exists():
            return cls()
        with open(config_file, 'r') as f:
            data = yaml.safe_load(f) or {}

        preset = data.pop('preset', None)
        sections = {
            'data': DataConfig,
            'backbone': BackboneConfig,
            'train': TrainConfig,
            'eval': EvalConfig,
            'visualize': VisualizeConfig,
        }
        for key, section_cls in sections.items():
            if key in data:
                data[key] = _section(section_cls, data[key])
        try:
            config = cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid configuration {config_file}: {e}") from None
        if preset:
            config.train = apply_preset(config.train, preset)
        return config

    def save(self, config_path: str):
        """Save configuration to file"""
        config_file = Path(config_path)
        config_file.parent.mkdir(parents=True, exist_ok=True)

        with open(config_file, 'w') as f:
            yaml.dump(asdict(self), f, default_flow_style=False, indent=2)

    def update_from_args(self, args):
        """Apply command-line overrides; flags left unset keep the file values"""
        if getattr(args, 'preset', None):
            self.train = apply_preset(self.train, args.preset)
        if getattr(args, 'debug', False):
            self.debug = True
        if getattr(args, 'output_dir', None):
            self.output_dir = args.output_dir

        overrides = {
            'data': {'data': 'root', 'data_seed': 'seed', 'homography_source': 'homography_source',
                     'synthetic_spec': 'synthetic_spec'},
            'train': {'modality': 'modality', 'segments': 'segments', 'consensus': 'consensus',
                      'consensus_weights': 'consensus_weights', 'snippet_length': 'snippet_length',
                      'batch_size': 'batch_size', 'lr': 'lr', 'lr_steps': 'lr_steps',
                      'momentum': 'momentum', 'iterations': 'max_iterations', 'dropout': 'dropout',
                      'weight_decay': 'weight_decay', 'init_from': 'init_from', 'seed': 'seed',
                      'log_interval': 'log_interval'},
            'eval': {'test_snippets': 'test_snippets'},
            'visualize': {'iterations': 'iterations', 'step_size': 'step_size', 'blur_sigma': 'blur_sigma',
                          'blur_every': 'blur_every', 'seed': 'seed'},
        }
        command = getattr(args, 'command', None)
        for section_name, mapping in overrides.items():
            if section_name == 'visualize' and command != 'visualize':
                continue
            if section_name == 'train' and command == 'visualize':
                continue
            section = getattr(self, section_name)
            for arg_name, attr in mapping.items():
                value = getattr(args, arg_name, None)
                if value is not None:
                    setattr(section, attr, value)

        for flag in ('partial_bn', 'aspect_jitter', 'snippet_baseline'):
            if getattr(args, flag, False):
                setattr(self.train, flag, True)
        if getattr(args, 'no_ten_crop', False):
            self.eval.ten_crop = False

    def get_output_path(self) -> Path:
        """Get absolute path to output directory"""
        output_path = Path(self.output_dir)
        if not output_path.is_absolute():
            output_path = Path.cwd() / output_path
        return output_path

"""
Checkpoint directories: one tensor file per named parameter or BN buffer, the
backbone spec as key=value text, and a YAML manifest tying them together.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import yaml

from core.exceptions import ConfigError
from data.tensor_io import read_tensor, write_tensor
from network.backbone import BackboneModel, BackboneSpec, load_model

logger = logging.getLogger(__name__)

MANIFEST = "manifest.yaml"
SPEC_FILE = "backbone.txt"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: BackboneModel
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def modality(self) -> str:
        return self.metadata.get("modality", "rgb")


def save_checkpoint(path: Union[str, Path], model: BackboneModel, metadata: Dict[str, Any] = None) -> Path:
    root = Path(path)
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    model.spec.save(root / SPEC_FILE)

    def entries(items: Dict[str, np.ndarray]):
        listed = []
        for name, array in items.items():
            relative = f"tensors/{name}.tsnt"
            write_tensor(root / relative, array)
            listed.append({"name": name, "shape": list(array.shape), "file": relative})
        return listed

    manifest = {
        "format_version": FORMAT_VERSION,
        "layers": [conv.name for conv in model.convs] + [bn.name for bn in model.bns] + [model.head.name],
        "parameters": entries({n: p.data for n, p in model.parameters().items()}),
        "buffers": entries(model.buffers()),
        "freeze_flags": model.freeze_flags(),
        "metadata": dict(metadata or {}),
    }
    with open(root / MANIFEST, "w") as f:
        yaml.safe_dump(manifest, f, default_flow_style=False, sort_keys=True)
    logger.info(f"💾 Checkpoint saved to {root}")
    return root


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    root = Path(path)
    manifest_path = root / MANIFEST
    if not manifest_path.exists():
        raise FileNotFoundError(f"Checkpoint manifest not found: {manifest_path}")
    with open(manifest_path) as f:
        manifest = yaml.safe_load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format {manifest.get('format_version')!r}")

    spec = BackboneSpec.load(root / SPEC_FILE)
    state: Dict[str, np.ndarray] = {}
    for entry in manifest["parameters"] + manifest["buffers"]:
        array = read_tensor(root / entry["file"])
        if list(array.shape) != entry["shape"]:
            raise ConfigError(f"tensor {entry['name']} has shape {array.shape}, manifest says {entry['shape']}")
        state[entry["name"]] = array
    metadata = manifest.get("metadata") or {}
    model = load_model(spec, state, seed=metadata.get("seed", 0))
    for bn, frozen in zip(model.bns, manifest.get("freeze_flags", [])):
        bn.frozen = bool(frozen)
    logger.info(f"📂 Loaded checkpoint from {root}")
    return Checkpoint(model, metadata)

"""
Resolve the configured video source into a dataset split
"""

import logging
from typing import Optional

from core.config import DataConfig
from data.dataset import DirectoryDataset, VideoDataset
from data.synthetic import SyntheticDataset, SyntheticSpec

logger = logging.getLogger(__name__)


def open_dataset(data: DataConfig, split: str = "train", spec: Optional[SyntheticSpec] = None) -> VideoDataset:
    """A directory dataset when ``data.root`` is set, in-memory synthetic videos otherwise"""
    if data.root:
        return DirectoryDataset(data.root, split)
    if spec is None:
        spec = SyntheticSpec.load(data.synthetic_spec) if data.synthetic_spec else SyntheticSpec()
    logger.info(f"🎞️ Rendering synthetic {split} split in memory ({spec.num_classes} classes, seed {data.seed})")
    return SyntheticDataset(spec, data.seed, split)

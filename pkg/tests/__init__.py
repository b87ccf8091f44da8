"""
Test configuration and utilities for the TSN desk toolkit
"""

import sys
from pathlib import Path

# Add project root and src directory to Python path for testing
project_root = Path(__file__).parent.parent
src_path = project_root / "src"
sys.path.insert(0, str(src_path))
sys.path.insert(0, str(project_root))

# Test configuration
TEST_CONFIG_FILE = project_root / "configuration" / "default.yaml"


def small_synthetic_spec(**overrides):
    """Four-class staged-motion spec with few, short videos"""
    from data.synthetic import SyntheticSpec

    values = dict(
        frames_per_video=12,
        train_videos_per_class=3,
        test_videos_per_class=2,
        camera_translation=1.0,
    )
    values.update(overrides)
    return SyntheticSpec(**values)

"""
Chart generator for the TSN desk toolkit
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

# Import plotting libraries with fallback
try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    MATPLOTLIB_AVAILABLE = True
except ImportError:
    MATPLOTLIB_AVAILABLE = False

logger = logging.getLogger(__name__)


class ChartGenerator:
    """
    Renders training curves, ablation summaries and class visualizations to PNG
    """

    def __init__(self, output_dir: Path, dpi: int = 150):
        self.output_dir = Path(output_dir)
        self.dpi = dpi

        if not MATPLOTLIB_AVAILABLE:
            logger.warning("Matplotlib not available. Chart generation disabled.")

    def _save(self, fig, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        chart_path = self.output_dir / name
        fig.tight_layout()
        fig.savefig(chart_path, dpi=self.dpi, bbox_inches='tight', metadata={'Software': None})
        plt.close(fig)
        return chart_path

    def training_curves(self, rows: Sequence, name: str = "training_curves.png") -> Optional[Path]:
        """Loss and train accuracy per logged interval; ``rows`` are MetricsRow-like"""
        if not MATPLOTLIB_AVAILABLE:
            return None
        if not rows:
            logger.warning("No metrics rows to plot")
            return None

        steps = [r.step for r in rows]
        fig, (loss_ax, acc_ax) = plt.subplots(1, 2, figsize=(12, 4.5))

        loss_ax.plot(steps, [r.loss for r in rows], color='tab:red', linewidth=2, marker='o', markersize=3)
        loss_ax.set_title('Training loss', fontsize=14, fontweight='bold')
        loss_ax.set_xlabel('Step')
        loss_ax.set_ylabel('Consensus cross-entropy')
        loss_ax.grid(True, alpha=0.3)

        acc_ax.plot(steps, [r.train_acc for r in rows], color='tab:blue', linewidth=2, marker='s', markersize=3)
        acc_ax.set_title('Training accuracy', fontsize=14, fontweight='bold')
        acc_ax.set_xlabel('Step')
        acc_ax.set_ylim(0.0, 1.0)
        acc_ax.grid(True, alpha=0.3)

        return self._save(fig, name)

    def ablation_chart(self, accuracies: Dict[str, float], title: str, name: str = "ablation.png") -> Optional[Path]:
        """Bar chart of mean test accuracy per variant"""
        if not MATPLOTLIB_AVAILABLE or not accuracies:
            return None

        labels = list(accuracies)
        values = [100.0 * accuracies[k] for k in labels]
        fig, ax = plt.subplots(figsize=(max(6, 1.5 * len(labels)), 4.5))
        bars = ax.bar(labels, values, color='tab:green', alpha=0.8)
        for bar, value in zip(bars, values):
            ax.text(bar.get_x() + bar.get_width() / 2, value + 1, f"{value:.1f}", ha='center', fontsize=10)
        ax.set_title(title, fontsize=14, fontweight='bold')
        ax.set_ylabel('Test accuracy (%)')
        ax.set_ylim(0, 105)
        ax.grid(True, axis='y', alpha=0.3)
        return self._save(fig, name)

    def class_visualization(self, image: np.ndarray, flow: bool, title: str = "",
                            name: str = "class_visualization.png") -> Optional[Path]:
        """RGB inputs as a color image; flow inputs as gray-scale x and y maps of the first pair"""
        if not MATPLOTLIB_AVAILABLE:
            return None

        image = np.asarray(image, dtype=np.float64)
        if flow:
            fig, axes = plt.subplots(1, 2, figsize=(8, 4))
            for ax, channel, label in zip(axes, (image[0], image[1]), ('x', 'y')):
                ax.imshow(channel, cmap='gray', vmin=-0.5, vmax=0.5)
                ax.set_title(f"{title} flow {label}".strip())
                ax.axis('off')
        else:
            fig, ax = plt.subplots(figsize=(4, 4))
            rgb = np.clip(image[:3].transpose(1, 2, 0) + 0.5, 0.0, 1.0)
            ax.imshow(rgb)
            ax.set_title(title)
            ax.axis('off')
        return self._save(fig, name)

import logging
from pathlib import Path
from typing import Dict, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from src.trainer.schemas import TrainLogRecord  # noqa: E402

logger = logging.getLogger(__name__)


def plot_loss_curve(log: Sequence[TrainLogRecord], path: Union[str, Path]) -> Path:
    """Total and per-term losses against step, log scale."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    steps = [record.step for record in log]

    fig, ax = plt.subplots(figsize=(8, 5))
    for name in ("total", "content", "style", "depth", "dog"):
        ax.plot(steps, [getattr(record, name) for record in log], label=name)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info(f"Loss curve saved to {path}")
    return path


def plot_frame_traces(traces: Dict[str, Sequence[float]], path: Union[str, Path],
                      ylabel: str = "warping error") -> Path:
    """One line per named per-frame-pair trace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(8, 4))
    for name, values in traces.items():
        ax.plot(range(len(values)), values, marker="o", label=name)
    ax.set_xlabel("frame pair")
    ax.set_ylabel(ylabel)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

"""
Native checkpoints: parameters, optimiser moments and trainer state in one file.
"""

import hashlib
import io
import json
import logging
import pickle
import zipfile
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Union

import torch

from src.core.exceptions import CheckpointCorruptError, CheckpointMismatchError
from src.core.storage import atomic_write_bytes
from src.style_network.model import ARCHITECTURE_VERSION, StyleModel
from src.trainer.schemas import TrainConfig, TrainerState

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
REQUIRED_KEYS = ("format_version", "architecture_version", "config_hash", "model_state", "optimiser_state", "state")


def config_hash(config: TrainConfig) -> str:
    """Hash of everything that changes the optimisation trajectory.

    Run length (epochs, max_steps) and checkpoint cadence are excluded so a
    run can be resumed with a longer budget.
    """
    payload = config.model_dump(mode="json", exclude={"epochs", "max_steps", "checkpoint_every"})
    payload["weights"] = config.effective_weights().model_dump(mode="json")
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Checkpoint(NamedTuple):
    model_state: Dict[str, torch.Tensor]
    optimiser_state: Optional[Dict[str, Any]]
    state: TrainerState


def save_checkpoint(path: Union[str, Path], model: StyleModel, optimiser: Optional[torch.optim.Optimizer],
                    state: TrainerState) -> Path:
    for name, param in model.named_parameters():
        if not bool(torch.isfinite(param).all()):
            raise CheckpointCorruptError(str(path), f"refusing to save non-finite parameter '{name}'")

    payload = {
        "format_version": FORMAT_VERSION,
        "architecture_version": ARCHITECTURE_VERSION,
        "config_hash": state.config_hash,
        "model_state": {k: v.detach().cpu().clone() for k, v in model.state_dict().items()},
        "optimiser_state": optimiser.state_dict() if optimiser is not None else None,
        "state": state.model_dump(),
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    path = atomic_write_bytes(path, buffer.getvalue())
    logger.info(f"Checkpoint written at step {state.step}: {path}")
    return path


def load_checkpoint(path: Union[str, Path], expected_hash: Optional[str] = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(2, "Checkpoint not found", str(path))
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (RuntimeError, EOFError, ValueError, pickle.UnpicklingError, zipfile.BadZipFile) as e:
        raise CheckpointCorruptError(str(path), str(e))

    if not isinstance(payload, dict) or any(key not in payload for key in REQUIRED_KEYS):
        raise CheckpointCorruptError(str(path), "missing required entries")
    if payload["format_version"] != FORMAT_VERSION:
        raise CheckpointMismatchError("format_version", FORMAT_VERSION, payload["format_version"])
    if payload["architecture_version"] != ARCHITECTURE_VERSION:
        raise CheckpointMismatchError("architecture_version", ARCHITECTURE_VERSION, payload["architecture_version"])
    if expected_hash is not None and payload["config_hash"] != expected_hash:
        raise CheckpointMismatchError("config_hash", expected_hash, payload["config_hash"])

    return Checkpoint(
        model_state=payload["model_state"],
        optimiser_state=payload["optimiser_state"],
        state=TrainerState(**payload["state"]),
    )


def load_model_from_checkpoint(path: Union[str, Path]) -> StyleModel:
    checkpoint = load_checkpoint(path)
    model = StyleModel()
    try:
        model.load_state_dict(checkpoint.model_state)
    except RuntimeError as e:
        raise CheckpointCorruptError(str(path), f"parameters do not fit the network: {e}")
    return model.eval()

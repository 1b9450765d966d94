"""
The optimisation loop: Adam over the style network, frozen backbones,
step-indexed checkpoints and a line-delimited JSON log.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import torch
from tqdm import tqdm

from src.backbones.depth import DepthPredictor
from src.backbones.encoders import PerceptualEncoder
from src.core.exceptions import DomainError, TrainingStepError
from src.core.storage import append_jsonl, truncate_jsonl
from src.datasets.services import SYNTHETIC, MixedDataset, iterate_batches
from src.imaging.schemas import ImageTensor
from src.objective.losses import Objective, StyleTargets
from src.style_network.model import StyleModel, build_network
from src.trainer.checkpoint import config_hash, load_checkpoint, save_checkpoint
from src.trainer.schemas import TrainConfig, TrainerState, TrainLogRecord

logger = logging.getLogger(__name__)

LOG_FILE = "train_log.jsonl"
CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "final.ckpt"


@dataclass
class TrainResult:
    model: StyleModel
    log: List[TrainLogRecord]
    checkpoint_path: Path
    log_path: Path
    config_hash: str
    seeds: dict = field(default_factory=dict)


class Trainer:
    def __init__(self, config: TrainConfig, encoder: PerceptualEncoder, depth_predictor: DepthPredictor,
                 style_image: ImageTensor, out_dir: Union[str, Path]):
        self.config = config
        self.encoder = encoder
        self.depth_predictor = depth_predictor
        self.style_image = style_image
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash(config)

    def _checkpoint_path(self, step: int) -> Path:
        return self.out_dir / CHECKPOINT_DIR / f"step_{step:06d}.ckpt"

    def _state(self, step: int, epoch: int, dataset: MixedDataset) -> TrainerState:
        return TrainerState(step=step, epoch=epoch, seed=self.config.seed,
                            shuffle_seed=dataset.shuffle_seed, config_hash=self.config_hash)

    def _setup(self, resume_from: Optional[Path]) -> Tuple[StyleModel, torch.optim.Optimizer, int]:
        model = build_network(self.config.seed)
        optimiser = torch.optim.Adam(model.parameters(), lr=self.config.learning_rate, betas=self.config.betas)
        if resume_from is None:
            return model, optimiser, 0

        checkpoint = load_checkpoint(resume_from, expected_hash=self.config_hash)
        model.load_state_dict(checkpoint.model_state)
        if checkpoint.optimiser_state is not None:
            optimiser.load_state_dict(checkpoint.optimiser_state)
        logger.info(f"Resuming from {resume_from} at step {checkpoint.state.step}")
        return model, optimiser, checkpoint.state.step

    def train(self, dataset: MixedDataset, resume_from: Optional[Union[str, Path]] = None) -> TrainResult:
        if len(dataset) == 0:
            raise DomainError("Training dataset is empty")

        config = self.config
        if config.ablations.no_synthetic and SYNTHETIC in dataset.sources:
            logger.info("Dropping synthetic frames from the training stream")
            dataset = dataset.without(SYNTHETIC)
        model, optimiser, step = self._setup(Path(resume_from) if resume_from else None)
        model.train()

        targets = StyleTargets.from_image(self.encoder, self.style_image, resize_to=dataset.resize_to)
        objective = Objective(self.encoder, self.depth_predictor, config.effective_weights(), targets)

        steps_per_epoch = dataset.steps_per_epoch(config.batch_size)
        total_steps = config.max_steps or config.epochs * steps_per_epoch
        log_path = self.out_dir / LOG_FILE
        if step == 0 and log_path.exists():
            log_path.unlink()
        elif log_path.exists():
            # records past the checkpoint are replayed by this run
            dropped = truncate_jsonl(log_path, lambda record: record["step"] <= step)
            if dropped:
                logger.info(f"Dropped {dropped} log record(s) past step {step}")

        log: List[TrainLogRecord] = []
        last_good: Optional[Path] = Path(resume_from) if resume_from else None
        progress = tqdm(total=total_steps, initial=step, desc="train", disable=None)

        while step < total_steps:
            epoch = step // steps_per_epoch
            batches = iterate_batches(dataset, config.batch_size, epoch, start_batch=step % steps_per_epoch)
            for batch in batches:
                if step >= total_steps:
                    break
                started = time.perf_counter()
                try:
                    report = self._step(model, optimiser, objective, batch, step)
                except TrainingStepError as e:
                    raise TrainingStepError(e.component, e.details["value"], step,
                                            str(last_good) if last_good else None) from e
                step += 1

                record = TrainLogRecord(
                    step=step, epoch=epoch,
                    content=report.content, style=report.style, depth=report.depth, dog=report.dog,
                    total=report.total, wall_ms=(time.perf_counter() - started) * 1000.0,
                )
                log.append(record)
                append_jsonl(log_path, record)
                progress.update(1)
                progress.set_postfix(total=f"{report.total:.4g}")

                if config.checkpoint_every and step % config.checkpoint_every == 0:
                    last_good = save_checkpoint(self._checkpoint_path(step), model, optimiser,
                                                self._state(step, step // steps_per_epoch, dataset))
        progress.close()

        final = save_checkpoint(self.out_dir / CHECKPOINT_DIR / FINAL_CHECKPOINT, model, optimiser,
                                self._state(step, step // steps_per_epoch, dataset))
        logger.info(f"Training finished after {step} steps")
        return TrainResult(
            model=model.eval(),
            log=log,
            checkpoint_path=final,
            log_path=log_path,
            config_hash=self.config_hash,
            seeds={"model": config.seed, "shuffle": dataset.shuffle_seed},
        )

    def _step(self, model: StyleModel, optimiser: torch.optim.Optimizer, objective: Objective,
              batch: torch.Tensor, step: int):
        optimiser.zero_grad(set_to_none=True)
        y_hat = model(batch)
        result = objective.evaluate(batch, y_hat, step)
        # all-zero weights leave nothing to differentiate
        if result.total.requires_grad:
            result.total.backward()
            optimiser.step()
        return result.report


def train(config: TrainConfig, dataset: MixedDataset, backbones: Tuple[PerceptualEncoder, DepthPredictor],
          style_image: ImageTensor, out_dir: Union[str, Path],
          resume_from: Optional[Union[str, Path]] = None) -> TrainResult:
    encoder, depth_predictor = backbones
    return Trainer(config, encoder, depth_predictor, style_image, out_dir).train(dataset, resume_from)

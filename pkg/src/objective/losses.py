"""
Content, style, depth and DoG losses and their weighted sum.

Every norm is averaged per element so the published weights behave the same
at any resolution. Batched ``*_batch`` functions return 0-dim tensors and
keep autograd; the ImageTensor functions return floats.
"""

import logging
import math
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F

from src.backbones.depth import DepthPredictor
from src.backbones.encoders import PerceptualEncoder
from src.core.exceptions import DomainError, TrainingStepError
from src.imaging.filters import dog_response_batch, gram_matrix_batch
from src.imaging.schemas import ImageTensor
from src.objective.schemas import TERMS, LossReport, LossWeights

logger = logging.getLogger(__name__)

Number = Union[float, torch.Tensor]


def _same_shape(x: torch.Tensor, y_hat: torch.Tensor) -> None:
    if x.shape != y_hat.shape:
        raise DomainError.shape_mismatch(x.shape, y_hat.shape, "content and stylised images")


def _mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ((a - b) ** 2).mean()


# |--- content (relu2_2 for VGG-16) ---|
def content_loss_batch(encoder: PerceptualEncoder, x: torch.Tensor, y_hat: torch.Tensor) -> torch.Tensor:
    _same_shape(x, y_hat)
    layer = encoder.content_layer
    target = encoder(x, [layer])[layer]
    return _mse(encoder(y_hat, [layer])[layer], target)


def content_loss(encoder: PerceptualEncoder, x: ImageTensor, y_hat: ImageTensor) -> float:
    return float(content_loss_batch(encoder, x.batch(), y_hat.batch()))


# |--- style ---|
class StyleTargets:
    """Gram matrices of one style image, computed once and then read-only."""

    def __init__(self, grams: Dict[str, torch.Tensor]):
        self.grams = {name: g.detach() for name, g in grams.items()}

    @property
    def layers(self) -> Tuple[str, ...]:
        return tuple(self.grams)

    @classmethod
    def from_image(cls, encoder: PerceptualEncoder, style: Union[ImageTensor, torch.Tensor],
                   resize_to: Optional[Tuple[int, int]] = None,
                   layers: Optional[Sequence[str]] = None) -> "StyleTargets":
        batch = style.batch() if isinstance(style, ImageTensor) else style
        if resize_to is not None and tuple(batch.shape[2:]) != tuple(resize_to):
            batch = F.interpolate(batch, size=resize_to, mode="bilinear", align_corners=False, antialias=True)
        layers = encoder.check_layers(layers or encoder.style_layers)
        with torch.no_grad():
            features = encoder(batch, layers)
        return cls({name: gram_matrix_batch(features[name])[0] for name in layers})


def style_loss_batch(encoder: PerceptualEncoder, y_hat: torch.Tensor,
                     targets: StyleTargets) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """Sum over layers of the per-element mean squared Gram difference."""
    features = encoder(y_hat, targets.layers)
    per_layer = {}
    for name, target in targets.grams.items():
        gram = gram_matrix_batch(features[name])
        per_layer[name] = ((gram - target.to(gram.dtype).unsqueeze(0)) ** 2).mean()
    total = sum(per_layer.values())
    return total, per_layer


def style_loss(encoder: PerceptualEncoder, y_hat: ImageTensor, y: Union[ImageTensor, StyleTargets],
               layers: Optional[Sequence[str]] = None) -> float:
    targets = y if isinstance(y, StyleTargets) else StyleTargets.from_image(encoder, y, layers=layers)
    total, _ = style_loss_batch(encoder, y_hat.batch(), targets)
    return float(total)


# |--- depth ---|
def depth_loss_batch(predictor: DepthPredictor, x: torch.Tensor, y_hat: torch.Tensor) -> torch.Tensor:
    _same_shape(x, y_hat)
    with torch.no_grad():
        target = predictor(x)
    return _mse(predictor(y_hat), target)


def depth_loss(predictor: DepthPredictor, x: ImageTensor, y_hat: ImageTensor) -> float:
    return float(depth_loss_batch(predictor, x.batch(), y_hat.batch()))


# |--- DoG ---|
def dog_loss_batch(x: torch.Tensor, y_hat: torch.Tensor,
                   sigmas: Optional[Tuple[float, float]] = None) -> torch.Tensor:
    _same_shape(x, y_hat)
    return _mse(dog_response_batch(y_hat, sigmas), dog_response_batch(x, sigmas))


def dog_loss(x: ImageTensor, y_hat: ImageTensor, sigmas: Optional[Tuple[float, float]] = None) -> float:
    return float(dog_loss_batch(x.batch(), y_hat.batch(), sigmas))


# |--- weighted sum ---|
def total_loss(weights: LossWeights, content: Number, style: Number, depth: Number, dog: Number,
               style_layers: Optional[Dict[str, Number]] = None, step: Optional[int] = None) -> LossReport:
    """Weighted sum of the four terms, accounted in double precision."""
    terms = {"content": content, "style": style, "depth": depth, "dog": dog}
    values = {}
    for name, value in terms.items():
        value = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        if not math.isfinite(value):
            raise TrainingStepError(name, value, step)
        values[name] = value

    contributions = {name: weights.weight_for(name) * values[name] for name in TERMS}
    return LossReport(
        **values,
        total=sum(contributions.values()),
        style_layers={k: float(v) for k, v in (style_layers or {}).items()},
        contributions=contributions,
    )


class ObjectiveResult(NamedTuple):
    total: torch.Tensor
    report: LossReport


class Objective:
    """Encoder, depth predictor, weights and cached style Grams bundled together."""

    def __init__(self, encoder: PerceptualEncoder, depth_predictor: DepthPredictor,
                 weights: LossWeights, style_targets: StyleTargets,
                 dog_sigmas: Optional[Tuple[float, float]] = None):
        self.encoder = encoder
        self.depth_predictor = depth_predictor
        self.weights = weights
        self.style_targets = style_targets
        self.dog_sigmas = dog_sigmas

    def _term(self, name: str, x: torch.Tensor, y_hat: torch.Tensor):
        if name == "content":
            return content_loss_batch(self.encoder, x, y_hat), {}
        if name == "style":
            return style_loss_batch(self.encoder, y_hat, self.style_targets)
        if name == "depth":
            return depth_loss_batch(self.depth_predictor, x, y_hat), {}
        return dog_loss_batch(x, y_hat, self.dog_sigmas), {}

    def evaluate(self, x: torch.Tensor, y_hat: torch.Tensor, step: Optional[int] = None) -> ObjectiveResult:
        _same_shape(x, y_hat)
        values: Dict[str, torch.Tensor] = {}
        style_layers: Dict[str, torch.Tensor] = {}
        total = None
        for name in TERMS:
            weight = self.weights.weight_for(name)
            if weight == 0.0:
                # reported, but kept out of the graph
                with torch.no_grad():
                    value, extra = self._term(name, x, y_hat)
            else:
                value, extra = self._term(name, x, y_hat)
                total = weight * value if total is None else total + weight * value
            values[name] = value
            style_layers.update(extra)

        report = total_loss(self.weights, style_layers=style_layers, step=step, **values)
        if total is None:
            total = torch.zeros((), dtype=y_hat.dtype, device=y_hat.device)
        return ObjectiveResult(total=total, report=report)

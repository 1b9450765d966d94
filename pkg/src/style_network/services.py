import logging
import time
from typing import Protocol

import torch

from src.core.exceptions import DomainError, IndivisibleResolutionError
from src.imaging.schemas import ColourSpace, ImageTensor
from src.style_network.model import StyleModel

logger = logging.getLogger(__name__)


def check_resolution(height: int, width: int, multiple: int = StyleModel.STRIDE) -> None:
    if height % multiple or width % multiple:
        raise IndivisibleResolutionError(height, width, multiple)


def _model_dtype(model: StyleModel) -> torch.dtype:
    return next(model.parameters()).dtype


def stylise_batch(model: StyleModel, batch: torch.Tensor) -> torch.Tensor:
    """Raw (unclamped) network output; keeps autograd."""
    check_resolution(batch.shape[2], batch.shape[3])
    return model(batch.to(_model_dtype(model)))


def stylise(model: StyleModel, image: ImageTensor) -> ImageTensor:
    """Stylised rgb frame clamped to [0, 1] for display."""
    if image.colour_space != ColourSpace.RGB:
        raise DomainError("stylise expects an rgb image")
    with torch.no_grad():
        raw = stylise_batch(model.eval(), image.batch())[0]
    return ImageTensor.rgb(raw.clamp(0.0, 1.0).to(image.data.dtype))


def time_stylise(model: StyleModel, height: int = 512, width: int = 512, repeats: int = 3) -> float:
    """Median wall-clock milliseconds per frame. Reported, never asserted."""
    check_resolution(height, width)
    image = ImageTensor.rgb(torch.rand(3, height, width, generator=torch.Generator().manual_seed(0)))
    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        stylise(model, image)
        timings.append((time.perf_counter() - start) * 1000.0)
    timings.sort()
    median = timings[len(timings) // 2]
    logger.info(f"Stylised {height}x{width} in {median:.1f} ms")
    return median


class StylisationPass(Protocol):
    """A custom pass that reads and writes the colour buffer."""

    def __call__(self, colour: ImageTensor) -> ImageTensor: ...


class ModelPass:
    def __init__(self, model: StyleModel):
        self.model = model.eval()

    def __call__(self, colour: ImageTensor) -> ImageTensor:
        return stylise(self.model, colour)


class IdentityPass:
    """Bypass hook: writes the colour buffer back unchanged."""

    def __call__(self, colour: ImageTensor) -> ImageTensor:
        return colour

"""
Temporal consistency: flow-warping error and adjacent-frame perceptual distance.
"""

import logging
from typing import List, Optional, Sequence

import torch

from src.backbones.encoders import PerceptualEncoder
from src.backbones.services import get_encoder
from src.config import Config
from src.core.exceptions import ConfigurationError, DomainError
from src.imaging.schemas import FlowField, ImageTensor
from src.imaging.warping import warp_batch

logger = logging.getLogger(__name__)


def _check_lengths(frames: Sequence[ImageTensor], flows: Sequence[FlowField]) -> None:
    if len(flows) != max(len(frames) - 1, 0):
        raise DomainError(f"Expected {max(len(frames) - 1, 0)} flow fields for {len(frames)} frames, got {len(flows)}",
                          {"frames": len(frames), "flows": len(flows)})


def warping_errors(stylised: Sequence[ImageTensor], flows: Sequence[FlowField], masked: bool = True) -> List[float]:
    """Per-pair MSE between warp(s_{t+1}, flow_t) and s_t.

    With ``masked`` only pixels whose correspondence is valid count; a pair
    with no valid pixel contributes 0.
    """
    _check_lengths(stylised, flows)
    errors = []
    for t, flow in enumerate(flows):
        current, following = stylised[t].data.double(), stylised[t + 1].data.double()
        if current.shape != following.shape:
            raise DomainError.shape_mismatch(current.shape, following.shape, f"frames {t} and {t + 1}")
        warped = warp_batch(following.unsqueeze(0), flow.vectors.unsqueeze(0))[0]
        squared = ((warped - current) ** 2).mean(dim=0)
        if masked:
            valid = flow.mask()
            if not bool(valid.any()):
                logger.warning(f"Frame pair {t} has no valid flow pixels")
                errors.append(0.0)
                continue
            squared = squared[valid]
        errors.append(float(squared.mean()))
    return errors


def warping_error(stylised: Sequence[ImageTensor], flows: Sequence[FlowField], masked: bool = True) -> float:
    errors = warping_errors(stylised, flows, masked)
    return sum(errors) / len(errors) if errors else 0.0


def _unit_normalise(features: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    norm = torch.sqrt((features ** 2).sum(dim=1, keepdim=True))
    return features / (norm + eps)


class PerceptualDistance:
    """Learned patch distance (``lpips``) or the encoder-feature substitute."""

    def __init__(self, backend: Optional[str] = None, encoder: Optional[PerceptualEncoder] = None):
        self.backend = backend or Config.PERCEPTUAL_BACKEND
        if self.backend == "lpips":
            self.net = self._load_lpips()
            self.identifier = "lpips-vgg"
        elif self.backend == "encoder":
            self.encoder = encoder or get_encoder()
            self.identifier = f"encoder-{self.encoder.identifier}"
        else:
            raise ConfigurationError(f"Unknown perceptual backend '{self.backend}'",
                                     {"available": ["lpips", "encoder"]})

    @staticmethod
    def _load_lpips():
        try:
            import lpips

            net = lpips.LPIPS(net="vgg", verbose=False)
        except Exception as e:
            raise ConfigurationError(
                f"LPIPS backbone unavailable ({e}); use the 'encoder' perceptual backend instead",
                {"substitute": "encoder"},
            )
        return net.eval()

    def batch_distance(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        """Per-image distances of two N x 3 x H x W batches in [0, 1]."""
        if a.shape != b.shape:
            raise DomainError.shape_mismatch(a.shape, b.shape, "perceptual distance inputs")
        with torch.no_grad():
            if self.backend == "lpips":
                return self.net(a.float() * 2 - 1, b.float() * 2 - 1).view(-1)
            layers = self.encoder.style_layers
            fa = self.encoder(a, layers)
            fb = self.encoder(b, layers)
            per_layer = [((_unit_normalise(fa[k]) - _unit_normalise(fb[k])) ** 2).sum(dim=1).mean(dim=(1, 2))
                         for k in layers]
            return torch.stack(per_layer).mean(dim=0)

    def __call__(self, frame_a: ImageTensor, frame_b: ImageTensor) -> float:
        return float(self.batch_distance(frame_a.batch(), frame_b.batch())[0])


def perceptual_distance(frame_a: ImageTensor, frame_b: ImageTensor,
                        metric: Optional[PerceptualDistance] = None) -> float:
    metric = metric or PerceptualDistance()
    return metric(frame_a, frame_b)


def adjacent_perceptual_distances(frames: Sequence[ImageTensor], metric: PerceptualDistance) -> List[float]:
    return [metric(frames[t], frames[t + 1]) for t in range(len(frames) - 1)]

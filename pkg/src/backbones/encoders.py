"""
Perceptual feature encoders.

Every encoder is frozen at construction: parameters never receive gradients,
but gradients still flow through the encoder to its input image.
"""

import hashlib
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torchvision

from src.config import Config
from src.core.exceptions import ConfigurationError, DomainError
from src.imaging.schemas import ColourSpace, ImageTensor

logger = logging.getLogger(__name__)


class PerceptualEncoder(nn.Module):
    """Base class: a frozen network exposing named feature taps."""

    identifier: str = "encoder"
    # tap name -> (channels, stride)
    channel_table: Dict[str, Tuple[int, int]] = {}
    content_layer: str = ""
    style_layers: Tuple[str, ...] = ()
    sifid_layer: str = ""
    mean: Tuple[float, ...] = (0.0, 0.0, 0.0)
    std: Tuple[float, ...] = (1.0, 1.0, 1.0)

    @property
    def layer_names(self) -> Tuple[str, ...]:
        return tuple(self.channel_table)

    def freeze(self) -> "PerceptualEncoder":
        for param in self.parameters():
            param.requires_grad_(False)
        return self.eval()

    def train(self, mode: bool = True):
        # frozen backbones stay in eval mode
        return super().train(False)

    def normalise(self, batch: torch.Tensor) -> torch.Tensor:
        mean = torch.tensor(self.mean, dtype=batch.dtype, device=batch.device).view(1, -1, 1, 1)
        std = torch.tensor(self.std, dtype=batch.dtype, device=batch.device).view(1, -1, 1, 1)
        return (batch - mean) / std

    def check_layers(self, layers: Iterable[str]) -> Tuple[str, ...]:
        layers = tuple(layers)
        unknown = [name for name in layers if name not in self.channel_table]
        if unknown:
            raise ConfigurationError(
                f"Unknown layer(s) {unknown} for encoder '{self.identifier}'",
                {"available": list(self.channel_table)},
            )
        return layers

    def forward(self, batch: torch.Tensor, layers: Optional[Sequence[str]] = None) -> Dict[str, torch.Tensor]:
        wanted = self.check_layers(layers if layers is not None else self.layer_names)
        return self._extract(self.normalise(batch), set(wanted))

    def _extract(self, batch: torch.Tensor, wanted: set) -> Dict[str, torch.Tensor]:
        raise NotImplementedError


class Vgg16Encoder(PerceptualEncoder):
    """VGG-16 tapped at relu1_2, relu2_2, relu3_3 and relu4_3."""

    identifier = "vgg16"
    channel_table = {
        "relu1_2": (64, 1),
        "relu2_2": (128, 2),
        "relu3_3": (256, 4),
        "relu4_3": (512, 8),
    }
    content_layer = "relu2_2"
    style_layers = ("relu1_2", "relu2_2", "relu3_3", "relu4_3")
    sifid_layer = "relu4_3"
    mean = (0.485, 0.456, 0.406)
    std = (0.229, 0.224, 0.225)

    # index of each tap inside torchvision's vgg16().features
    TAP_INDEX = {"relu1_2": 3, "relu2_2": 8, "relu3_3": 15, "relu4_3": 22}
    WEIGHTS_FILE = "vgg16-397923af.pth"

    def __init__(self, weights_path: Optional[Path] = None, load_weights: bool = True):
        super().__init__()
        weights_path = Path(weights_path or Path(Config.BACKBONE_DIR) / self.WEIGHTS_FILE)
        if load_weights and not weights_path.exists():
            raise ConfigurationError(
                f"VGG-16 weights not found at {weights_path}; "
                f"place {self.WEIGHTS_FILE} in BACKBONE_DIR or use the 'tiny' substitute profile",
                {"path": str(weights_path), "substitute": "tiny"},
            )

        features = torchvision.models.vgg16(weights=None).features[: self.TAP_INDEX["relu4_3"] + 1]
        for module in features:
            if isinstance(module, nn.ReLU):
                module.inplace = False
        self.features = features

        if load_weights:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            feature_state = {k[len("features."):]: v for k, v in state.items() if k.startswith("features.")}
            result = self.features.load_state_dict(feature_state, strict=False)
            if result.missing_keys:
                raise ConfigurationError(
                    f"VGG-16 weights at {weights_path} lack layers {result.missing_keys}",
                    {"path": str(weights_path)},
                )
            logger.info(f"Loaded VGG-16 weights from {weights_path}")
        self.freeze()

    def _extract(self, batch, wanted):
        out = {}
        last = max(self.TAP_INDEX[name] for name in wanted)
        by_index = {index: name for name, index in self.TAP_INDEX.items()}
        x = batch
        for index, module in enumerate(self.features):
            x = module(x)
            name = by_index.get(index)
            if name in wanted:
                out[name] = x
            if index == last:
                break
        return out


def _seeded_conv(in_channels: int, out_channels: int, kernel_size: int, stride: int,
                 generator: torch.Generator) -> nn.Conv2d:
    conv = nn.Conv2d(in_channels, out_channels, kernel_size, stride=stride, padding=kernel_size // 2)
    bound = 1.0 / (in_channels * kernel_size * kernel_size) ** 0.5
    with torch.no_grad():
        conv.weight.uniform_(-bound, bound, generator=generator)
        conv.bias.uniform_(-bound, bound, generator=generator)
    return conv


class TinyEncoder(PerceptualEncoder):
    """Fixed-seed random two-layer convnet for tests and desk-scale runs."""

    identifier = "tiny"
    channel_table = {"relu1": (8, 1), "relu2": (16, 2)}
    content_layer = "relu2"
    style_layers = ("relu1", "relu2")
    sifid_layer = "relu2"
    mean = (0.5, 0.5, 0.5)
    std = (0.5, 0.5, 0.5)

    def __init__(self, seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.conv1 = _seeded_conv(3, 8, 3, 1, generator)
        self.conv2 = _seeded_conv(8, 16, 3, 2, generator)
        self.identifier = f"tiny-seed{seed}"
        self.freeze()

    def _extract(self, batch, wanted):
        out = {}
        relu1 = torch.relu(self.conv1(batch))
        if "relu1" in wanted:
            out["relu1"] = relu1
        if "relu2" in wanted:
            out["relu2"] = torch.relu(self.conv2(relu1))
        return out


class LinearTestEncoder(PerceptualEncoder):
    """A single fixed 1x1 linear map; features are exact linear functions of pixels."""

    identifier = "linear"
    content_layer = "linear"
    style_layers = ("linear",)
    sifid_layer = "linear"

    def __init__(self, weight: Optional[torch.Tensor] = None):
        super().__init__()
        weight = torch.eye(3) if weight is None else torch.as_tensor(weight)
        if weight.dim() != 2 or weight.shape[1] != 3:
            raise DomainError(f"Linear encoder weight must be K x 3, got {tuple(weight.shape)}")
        self.register_buffer("weight", weight.clone())
        self.channel_table = {"linear": (int(weight.shape[0]), 1)}

    def _extract(self, batch, wanted):
        weight = self.weight.to(dtype=batch.dtype, device=batch.device)
        return {"linear": torch.einsum("kc,nchw->nkhw", weight, batch)}


def encode_features(encoder: PerceptualEncoder, image: ImageTensor,
                    layers: Optional[Sequence[str]] = None) -> Dict[str, ImageTensor]:
    """One feature map per requested tap."""
    if image.colour_space != ColourSpace.RGB:
        raise DomainError("encode_features expects an rgb image")
    features = encoder(image.batch(), layers)
    return {name: ImageTensor.feature(tensor[0]) for name, tensor in features.items()}


def backbone_checksum(module: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in name order."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()

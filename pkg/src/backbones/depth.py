"""
Monocular depth predictors.

Output convention: one channel of relative inverse depth, min-max normalised
to [0, 1] per image (all 0.5 for a constant prediction), at the input's size.
"""

import hashlib
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.config import Config
from src.core.exceptions import ConfigurationError, DomainError, StorageError
from src.core.storage import list_image_files, read_image
from src.imaging.schemas import ColourSpace, ImageTensor

logger = logging.getLogger(__name__)


def minmax_normalise(batch: torch.Tensor) -> torch.Tensor:
    """Per-image min-max to [0, 1]; constant maps become 0.5."""
    n = batch.shape[0]
    flat = batch.reshape(n, -1)
    low = flat.min(dim=1).values.view(n, 1, 1, 1)
    high = flat.max(dim=1).values.view(n, 1, 1, 1)
    spread = high - low
    constant = spread <= 0
    safe = torch.where(constant, torch.ones_like(spread), spread)
    return torch.where(constant, torch.full_like(batch, 0.5), (batch - low) / safe)


class DepthPredictor(nn.Module):
    identifier: str = "depth"

    def freeze(self) -> "DepthPredictor":
        for param in self.parameters():
            param.requires_grad_(False)
        return self.eval()

    def train(self, mode: bool = True):
        return super().train(False)

    def forward(self, batch: torch.Tensor) -> torch.Tensor:
        return minmax_normalise(self._raw(batch))

    def _raw(self, batch: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError


class ChannelMeanDepth(DepthPredictor):
    """Analytic stub: the channel mean of the image.

    Already within [0, 1] for rgb input, so it is returned without min-max
    normalisation; this keeps the depth loss a closed form of the inputs.
    """

    identifier = "channel_mean"

    def forward(self, batch):
        return batch.mean(dim=1, keepdim=True)


class BufferDepthPredictor(DepthPredictor):
    """Returns the depth buffer registered for an exact colour frame."""

    identifier = "gbuffer"

    def __init__(self):
        super().__init__()
        self._buffers: Dict[str, torch.Tensor] = {}

    @staticmethod
    def _key(colour: torch.Tensor) -> str:
        array = colour.detach().cpu().contiguous().numpy()
        return hashlib.sha1(array.tobytes() + str(array.shape).encode()).hexdigest()

    def register(self, colour: ImageTensor, depth: ImageTensor) -> None:
        self._buffers[self._key(colour.data)] = depth.data.detach()

    @classmethod
    def from_run_directory(cls, root: Union[str, Path],
                           size: Optional[Tuple[int, int]] = None) -> "BufferDepthPredictor":
        """Register every colour/depth pair a ``simulate`` run wrote under ``root``.

        Colour frames are read the way the training corpus reads them, so the
        lookup matches only when ``size`` equals the corpus resize_to.
        """
        root = Path(root)
        predictor = cls()
        try:
            colour_paths = list_image_files(root / "colour")
        except StorageError:
            raise ConfigurationError(f"No simulator colour buffers under {root}", {"path": str(root)})
        for colour_path in colour_paths:
            depth_path = root / "depth" / colour_path.name.replace("frame_", "depth_", 1)
            if not depth_path.exists():
                raise ConfigurationError(f"Missing depth buffer for {colour_path.name}", {"path": str(depth_path)})
            depth = read_image(depth_path, size).data[:1]
            predictor.register(read_image(colour_path, size),
                               ImageTensor(data=depth, colour_space=ColourSpace.LUMINANCE))
        logger.info(f"Registered {len(colour_paths)} depth buffer(s) from {root}")
        return predictor

    def _raw(self, batch):
        maps = []
        for image in batch:
            depth = self._buffers.get(self._key(image))
            if depth is None:
                raise DomainError("No depth buffer registered for this colour frame")
            maps.append(depth.to(dtype=batch.dtype, device=batch.device))
        return torch.stack(maps)


class MidasDepthPredictor(DepthPredictor):
    """MiDaS loaded through torch.hub from a local checkout under BACKBONE_DIR."""

    identifier = "midas"
    NET_SIZE = 256
    MEAN = (0.485, 0.456, 0.406)
    STD = (0.229, 0.224, 0.225)

    def __init__(self, model_type: Optional[str] = None, repo_dir: Optional[Path] = None):
        super().__init__()
        model_type = model_type or Config.MIDAS_MODEL
        repo_dir = Path(repo_dir or Path(Config.BACKBONE_DIR) / "MiDaS")
        if not repo_dir.exists():
            raise ConfigurationError(
                f"MiDaS checkout not found at {repo_dir}; "
                f"clone it into BACKBONE_DIR or use the 'channel_mean' depth substitute",
                {"path": str(repo_dir), "substitute": "channel_mean"},
            )
        torch.hub.set_dir(str(Path(Config.BACKBONE_DIR) / "hub"))
        self.net = torch.hub.load(str(repo_dir), model_type, source="local", pretrained=True)
        self.identifier = f"midas-{model_type}"
        logger.info(f"Loaded {model_type} from {repo_dir}")
        self.freeze()

    def _raw(self, batch):
        h, w = batch.shape[2:]
        mean = torch.tensor(self.MEAN, dtype=batch.dtype, device=batch.device).view(1, 3, 1, 1)
        std = torch.tensor(self.STD, dtype=batch.dtype, device=batch.device).view(1, 3, 1, 1)
        x = F.interpolate((batch - mean) / std, size=(self.NET_SIZE, self.NET_SIZE),
                          mode="bilinear", align_corners=False)
        prediction = self.net(x).unsqueeze(1)
        return F.interpolate(prediction, size=(h, w), mode="bilinear", align_corners=False)


def predict_depth(predictor: DepthPredictor, image: ImageTensor) -> ImageTensor:
    if image.colour_space != ColourSpace.RGB:
        raise DomainError("predict_depth expects an rgb image")
    depth = predictor(image.batch())[0]
    return ImageTensor(data=depth, colour_space=ColourSpace.FEATURE, value_range=(0.0, 1.0))

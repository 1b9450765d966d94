from enum import Enum
from typing import Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from src.core.exceptions import DomainError

# Displayable images may overshoot [0, 1] by float round-off only.
RANGE_TOLERANCE = 1e-6


class ColourSpace(str, Enum):
    RGB = "rgb"
    LUMINANCE = "luminance"
    FEATURE = "feature"


def _require_finite(tensor: torch.Tensor, what: str) -> None:
    if not bool(torch.isfinite(tensor.detach()).all()):
        raise DomainError(f"{what} contains non-finite values")


class ImageTensor(BaseModel):
    """Channels x height x width container for images and feature maps."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: torch.Tensor
    colour_space: ColourSpace = ColourSpace.RGB
    value_range: Optional[Tuple[float, float]] = None

    @field_validator("data")
    @classmethod
    def _check_data(cls, value: torch.Tensor) -> torch.Tensor:
        if not isinstance(value, torch.Tensor):
            raise DomainError(f"ImageTensor data must be a torch.Tensor, got {type(value).__name__}")
        if value.dim() != 3:
            raise DomainError(f"ImageTensor data must be C x H x W, got shape {tuple(value.shape)}")
        if min(value.shape) < 1:
            raise DomainError(f"ImageTensor must not be empty, got shape {tuple(value.shape)}")
        if not value.is_floating_point():
            raise DomainError("ImageTensor data must be floating point")
        _require_finite(value, "ImageTensor")
        return value

    @model_validator(mode="after")
    def _check_range(self):
        if self.colour_space == ColourSpace.FEATURE:
            return self
        data = self.data.detach()
        if float(data.min()) < -RANGE_TOLERANCE or float(data.max()) > 1.0 + RANGE_TOLERANCE:
            raise DomainError(
                f"{self.colour_space.value} image holds values outside [0, 1] "
                f"(min {float(data.min()):.6g}, max {float(data.max()):.6g})"
            )
        if self.value_range is None:
            object.__setattr__(self, "value_range", (0.0, 1.0))
        return self

    # |--- constructors ---|
    @classmethod
    def rgb(cls, data: torch.Tensor) -> "ImageTensor":
        return cls(data=data, colour_space=ColourSpace.RGB)

    @classmethod
    def feature(cls, data: torch.Tensor) -> "ImageTensor":
        return cls(data=data, colour_space=ColourSpace.FEATURE)

    @classmethod
    def from_batch(cls, batch: torch.Tensor, colour_space: ColourSpace = ColourSpace.RGB,
                   index: int = 0) -> "ImageTensor":
        return cls(data=batch[index], colour_space=colour_space)

    @classmethod
    def from_numpy(cls, array: np.ndarray, colour_space: ColourSpace = ColourSpace.RGB) -> "ImageTensor":
        """Build from an H x W x C (or H x W) array."""
        if array.ndim == 2:
            array = array[:, :, None]
        return cls(data=torch.from_numpy(np.ascontiguousarray(array.transpose(2, 0, 1))),
                   colour_space=colour_space)

    # |--- views ---|
    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.data.shape)

    def batch(self) -> torch.Tensor:
        """1 x C x H x W view for batched operators."""
        return self.data.unsqueeze(0)

    def clamped(self) -> "ImageTensor":
        return ImageTensor(data=self.data.clamp(0.0, 1.0), colour_space=self.colour_space)

    def to_numpy(self) -> np.ndarray:
        """H x W x C array."""
        return self.data.detach().cpu().numpy().transpose(1, 2, 0)


class GaussianKernel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sigma: float
    taps: torch.Tensor
    length_rule: str = "smallest odd integer >= 6*sigma"

    @field_validator("taps")
    @classmethod
    def _check_taps(cls, value: torch.Tensor) -> torch.Tensor:
        if value.dim() != 1 or value.numel() % 2 != 1:
            raise DomainError(f"Gaussian taps must be a 1-D odd-length array, got shape {tuple(value.shape)}")
        if abs(float(value.sum()) - 1.0) > 1e-9:
            raise DomainError("Gaussian taps must sum to 1")
        if not torch.equal(value, value.flip(0)):
            raise DomainError("Gaussian taps must be symmetric")
        return value

    @property
    def length(self) -> int:
        return int(self.taps.numel())

    @property
    def radius(self) -> int:
        return self.length // 2


class GramMatrix(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: torch.Tensor
    normaliser: int

    @field_validator("values")
    @classmethod
    def _check_symmetric_psd(cls, value: torch.Tensor) -> torch.Tensor:
        if value.dim() != 2 or value.shape[0] != value.shape[1]:
            raise DomainError(f"Gram matrix must be square, got shape {tuple(value.shape)}")
        detached = value.detach()
        tolerance = 1e-9 if detached.dtype == torch.float64 else 1e-5
        if float((detached - detached.T).abs().max()) > tolerance * max(1.0, float(detached.abs().max())):
            raise DomainError("Gram matrix must be symmetric")
        smallest = float(torch.linalg.eigvalsh(detached.double()).min())
        if smallest < -tolerance * max(1.0, float(detached.abs().max())):
            raise DomainError(f"Gram matrix must be positive semi-definite, smallest eigenvalue {smallest:.3g}")
        return value

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])


class FlowField(BaseModel):
    """Forward displacement (dx, dy) of frame t's pixels into frame t+1."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vectors: torch.Tensor
    validity_mask: Optional[torch.Tensor] = None

    @field_validator("vectors")
    @classmethod
    def _check_vectors(cls, value: torch.Tensor) -> torch.Tensor:
        if value.dim() != 3 or value.shape[0] != 2:
            raise DomainError(f"Flow vectors must be 2 x H x W, got shape {tuple(value.shape)}")
        _require_finite(value, "FlowField")
        return value

    @model_validator(mode="after")
    def _check_mask(self):
        if self.validity_mask is not None:
            if tuple(self.validity_mask.shape) != tuple(self.vectors.shape[1:]):
                raise DomainError.shape_mismatch(self.validity_mask.shape, self.vectors.shape[1:],
                                                 "validity mask and flow")
            if self.validity_mask.dtype != torch.bool:
                object.__setattr__(self, "validity_mask", self.validity_mask.bool())
        return self

    @classmethod
    def zeros(cls, height: int, width: int, dtype: torch.dtype = torch.float32) -> "FlowField":
        return cls(vectors=torch.zeros(2, height, width, dtype=dtype))

    @property
    def height(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def width(self) -> int:
        return int(self.vectors.shape[2])

    def mask(self) -> torch.Tensor:
        """Validity mask, all-valid when none was recorded."""
        if self.validity_mask is None:
            return torch.ones(self.height, self.width, dtype=torch.bool)
        return self.validity_mask

import json
from enum import Enum
from pathlib import Path
from typing import Annotated, List, Literal, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.exceptions import DomainError
from src.imaging.schemas import ColourSpace, FlowField, ImageTensor


class SpriteShape(str, Enum):
    RECT = "rect"
    DISC = "disc"


class Sprite(BaseModel):
    """A flat billboard moving linearly in screen space at a fixed depth."""

    model_config = ConfigDict(allow_inf_nan=False, frozen=True)

    shape: SpriteShape = SpriteShape.RECT
    # centre at frame 0, in pixels
    x0: float
    y0: float
    # own motion in px/frame, before camera parallax
    vx: float = 0.0
    vy: float = 0.0
    width: float = Field(gt=0)
    height: float = Field(gt=0)
    depth: float = Field(gt=0, le=1)
    albedo: Tuple[float, float, float] = (0.8, 0.3, 0.2)
    stripe_period: float = Field(default=6.0, ge=2)
    stripe_contrast: float = Field(default=0.5, ge=0, le=1)

    @model_validator(mode="after")
    def _check_albedo(self):
        if any(not 0.0 <= a <= 1.0 for a in self.albedo):
            raise ValueError(f"albedo must lie in [0, 1], got {self.albedo}")
        return self


class SceneSpec(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False, frozen=True)

    height: int = Field(gt=0)
    width: int = Field(gt=0)
    frame_count: int = Field(gt=0)
    # camera pan in px/frame at depth 1; content moves by -pan / depth
    pan_velocity: float = 0.0
    background_seed: int = 0
    background_depth: float = Field(default=1.0, gt=0, le=1)
    sprites: List[Sprite] = []

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SceneSpec":
        with open(path, "r", encoding="utf-8") as f:
            return cls.model_validate(json.load(f))


# |--- post effects ---|
class DepthOfField(BaseModel):
    kind: Literal["depth_of_field"] = "depth_of_field"
    focal_depth: float = Field(default=0.5, gt=0, le=1)
    # circle-of-confusion radius in px per unit of depth difference
    blur_scale: float = Field(default=8.0, ge=0)
    max_radius: int = Field(default=6, ge=1)


class Bloom(BaseModel):
    kind: Literal["bloom"] = "bloom"
    threshold: float = Field(default=0.8, ge=0, le=1)
    intensity: float = Field(default=0.6, ge=0)
    sigma: float = Field(default=3.0, gt=0)


class Vignette(BaseModel):
    kind: Literal["vignette"] = "vignette"
    strength: float = Field(default=0.4, ge=0, le=1)


class MotionBlur(BaseModel):
    kind: Literal["motion_blur"] = "motion_blur"
    samples: int = Field(default=5, ge=1)


PostEffect = Annotated[Union[DepthOfField, Bloom, Vignette, MotionBlur], Field(discriminator="kind")]


class PostEffectStack(BaseModel):
    effects: List[PostEffect] = []


class InjectionMode(str, Enum):
    BEFORE_POST = "before_post"
    AFTER_POST = "after_post"
    NONE = "none"


class GBufferFrame(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int
    colour: ImageTensor
    depth: ImageTensor
    # to the next frame; extrapolated for the last one
    flow: FlowField

    @model_validator(mode="after")
    def _check_buffers(self):
        if self.colour.colour_space != ColourSpace.RGB:
            raise DomainError("G-buffer colour must be rgb")
        if self.depth.channels != 1:
            raise DomainError(f"G-buffer depth must have one channel, got {self.depth.channels}")
        size = (self.colour.height, self.colour.width)
        for other, what in (((self.depth.height, self.depth.width), "colour and depth"),
                            ((self.flow.height, self.flow.width), "colour and flow")):
            if other != size:
                raise DomainError.shape_mismatch(size, other, what)
        return self

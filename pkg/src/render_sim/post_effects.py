"""
Screen-space post effects. Each one is a pure function of the colour buffer
and, where needed, the frame's depth or flow.
"""

import logging
from typing import Optional

import torch

from src.imaging.filters import gaussian_blur_batch, rgb_to_luminance_batch
from src.imaging.schemas import ImageTensor
from src.imaging.warping import warp_batch
from src.render_sim.schemas import Bloom, DepthOfField, GBufferFrame, MotionBlur, PostEffectStack, Vignette

logger = logging.getLogger(__name__)


def depth_of_field(colour: torch.Tensor, depth: torch.Tensor, effect: DepthOfField) -> torch.Tensor:
    """Blend between pre-blurred levels by circle-of-confusion radius.

    colour: N x 3 x H x W, depth: N x 1 x H x W. Level k is a Gaussian blur of
    sigma k/2; level 0 is the unblurred input, so in-focus pixels pass through.
    """
    radius = (effect.blur_scale * (depth - effect.focal_depth).abs()).clamp(0, effect.max_radius)
    levels = [colour] + [gaussian_blur_batch(colour, k / 2.0) for k in range(1, effect.max_radius + 1)]
    levels = torch.stack(levels)  # L+1 x N x 3 x H x W

    lower = radius.floor().clamp(max=effect.max_radius - 1)
    frac = (radius - lower).expand_as(colour)
    lower = lower.long().expand_as(colour).unsqueeze(0)

    below = levels.gather(0, lower)[0]
    above = levels.gather(0, lower + 1)[0]
    return below + frac * (above - below)


def bloom(colour: torch.Tensor, effect: Bloom) -> torch.Tensor:
    """Bright-pass above the threshold, blur, add back."""
    luminance = rgb_to_luminance_batch(colour)
    bright = colour * (luminance > effect.threshold).to(colour.dtype)
    glow = gaussian_blur_batch(bright, effect.sigma)
    return (colour + effect.intensity * glow).clamp(0.0, 1.0)


def vignette(colour: torch.Tensor, effect: Vignette) -> torch.Tensor:
    _, _, h, w = colour.shape
    ys = torch.linspace(-1.0, 1.0, h, dtype=colour.dtype, device=colour.device).view(h, 1)
    xs = torch.linspace(-1.0, 1.0, w, dtype=colour.dtype, device=colour.device).view(1, w)
    # corners at r^2 = 1
    r2 = (xs ** 2 + ys ** 2) / 2.0
    return colour * (1.0 - effect.strength * r2).clamp(0.0, 1.0)


def motion_blur(colour: torch.Tensor, flow: torch.Tensor, effect: MotionBlur) -> torch.Tensor:
    """Average of samples taken along each pixel's motion vector, centred on the pixel."""
    if effect.samples == 1:
        return colour
    accumulated = torch.zeros_like(colour)
    for s in range(effect.samples):
        fraction = s / (effect.samples - 1) - 0.5
        accumulated = accumulated + warp_batch(colour, flow * fraction)
    return accumulated / effect.samples


def apply_post_stack(frame: GBufferFrame, stack: PostEffectStack,
                     colour: Optional[ImageTensor] = None) -> ImageTensor:
    """Run the stack in order over ``colour`` (the frame's own colour buffer by default)."""
    image = (colour if colour is not None else frame.colour).batch()
    depth = frame.depth.batch().to(image.dtype)
    flow = frame.flow.vectors.unsqueeze(0).to(image.dtype)

    for effect in stack.effects:
        if isinstance(effect, DepthOfField):
            image = depth_of_field(image, depth, effect)
        elif isinstance(effect, Bloom):
            image = bloom(image, effect)
        elif isinstance(effect, Vignette):
            image = vignette(image, effect)
        elif isinstance(effect, MotionBlur):
            image = motion_blur(image, flow, effect)
    return ImageTensor.rgb(image[0].clamp(0.0, 1.0))

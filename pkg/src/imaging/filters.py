"""
Deterministic filtering primitives: Gaussian blur, DoG, Gram matrices,
luminance conversion and the discrete Laplacian energy.

Batched ``*_batch`` functions take N x C x H x W tensors and keep autograd
intact; the ImageTensor functions wrap them for single images.
"""

import math
from typing import Optional, Tuple

import torch
import torch.nn.functional as F

from src.config import Config
from src.core.exceptions import DomainError
from src.imaging.schemas import ColourSpace, GaussianKernel, GramMatrix, ImageTensor

# Rec. 709 luma weights
LUMINANCE_WEIGHTS = (0.2126, 0.7152, 0.0722)


def gaussian_kernel(sigma: float, radius: Optional[int] = None,
                    dtype: torch.dtype = torch.float64) -> GaussianKernel:
    """Normalised, symmetric 1-D Gaussian taps.

    The length is the smallest odd integer >= 6*sigma unless an explicit
    ``radius`` is given (length = 2*radius + 1).
    """
    if not sigma > 0 or not math.isfinite(sigma):
        raise DomainError(f"Gaussian sigma must be positive, got {sigma}")

    if radius is None:
        length = math.ceil(6.0 * sigma)
        if length % 2 == 0:
            length += 1
        radius = length // 2
        rule = "smallest odd integer >= 6*sigma"
    else:
        if radius < 0:
            raise DomainError(f"Gaussian radius must be non-negative, got {radius}")
        rule = f"explicit radius {radius}"

    offsets = torch.arange(-radius, radius + 1, dtype=torch.float64)
    taps = torch.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    taps = taps / taps.sum()
    # exact symmetry after the division
    taps = 0.5 * (taps + taps.flip(0))
    taps = taps / taps.sum()
    return GaussianKernel(sigma=float(sigma), taps=taps.to(dtype), length_rule=rule)


def _reflect_indices(size: int, pad: int, device=None) -> torch.Tensor:
    """Mirror indices (edge not repeated) for any pad width."""
    idx = torch.arange(-pad, size + pad, device=device)
    if size == 1:
        return torch.zeros_like(idx)
    period = 2 * (size - 1)
    idx = idx.abs() % period
    return torch.where(idx >= size, period - idx, idx)


def reflect_pad(batch: torch.Tensor, pad_h: int, pad_w: int) -> torch.Tensor:
    if pad_w:
        batch = batch.index_select(3, _reflect_indices(batch.shape[3], pad_w, batch.device))
    if pad_h:
        batch = batch.index_select(2, _reflect_indices(batch.shape[2], pad_h, batch.device))
    return batch


def separable_filter_batch(batch: torch.Tensor, taps: torch.Tensor) -> torch.Tensor:
    """Horizontal then vertical pass of the same 1-D kernel, reflection padded."""
    channels = batch.shape[1]
    taps = taps.to(dtype=batch.dtype, device=batch.device)
    radius = taps.numel() // 2

    horizontal = taps.view(1, 1, 1, -1).expand(channels, 1, 1, -1)
    vertical = taps.view(1, 1, -1, 1).expand(channels, 1, -1, 1)

    out = F.conv2d(reflect_pad(batch, 0, radius), horizontal, groups=channels)
    out = F.conv2d(reflect_pad(out, radius, 0), vertical, groups=channels)
    return out


def gaussian_blur_batch(batch: torch.Tensor, sigma: float, radius: Optional[int] = None) -> torch.Tensor:
    return separable_filter_batch(batch, gaussian_kernel(sigma, radius).taps)


def gaussian_blur(image: ImageTensor, sigma: float) -> ImageTensor:
    blurred = gaussian_blur_batch(image.batch(), sigma)[0]
    return ImageTensor(data=blurred, colour_space=image.colour_space)


def rgb_to_luminance_batch(batch: torch.Tensor) -> torch.Tensor:
    if batch.shape[1] == 1:
        return batch
    if batch.shape[1] != 3:
        raise DomainError(f"Luminance conversion expects 1 or 3 channels, got {batch.shape[1]}")
    weights = torch.tensor(LUMINANCE_WEIGHTS, dtype=batch.dtype, device=batch.device)
    return (batch * weights.view(1, 3, 1, 1)).sum(dim=1, keepdim=True)


def rgb_to_luminance(image: ImageTensor) -> ImageTensor:
    if image.colour_space == ColourSpace.FEATURE:
        raise DomainError("Luminance conversion expects an rgb or luminance image")
    return ImageTensor(data=rgb_to_luminance_batch(image.batch())[0], colour_space=ColourSpace.LUMINANCE)


def dog_response_batch(batch: torch.Tensor, sigmas: Optional[Tuple[float, float]] = None) -> torch.Tensor:
    """(G_s1 * L) - (G_s2 * L) on the luminance of each image."""
    sigma_1, sigma_2 = sigmas or Config.DOG_SIGMAS
    if not sigma_1 < sigma_2:
        raise DomainError(f"DoG expects sigma_1 < sigma_2, got {sigma_1}, {sigma_2}")
    luminance = rgb_to_luminance_batch(batch)
    return gaussian_blur_batch(luminance, sigma_1) - gaussian_blur_batch(luminance, sigma_2)


def dog_response(image: ImageTensor, sigmas: Optional[Tuple[float, float]] = None) -> ImageTensor:
    if image.colour_space == ColourSpace.FEATURE:
        raise DomainError("DoG response expects an rgb or luminance image")
    return ImageTensor.feature(dog_response_batch(image.batch(), sigmas)[0])


def gram_matrix_batch(features: torch.Tensor) -> torch.Tensor:
    """N x C x C channel correlations normalised by C*H*W."""
    n, c, h, w = features.shape
    flat = features.reshape(n, c, h * w)
    return torch.bmm(flat, flat.transpose(1, 2)) / (c * h * w)


def gram_matrix(features: ImageTensor) -> GramMatrix:
    c, h, w = features.shape
    return GramMatrix(values=gram_matrix_batch(features.batch())[0], normaliser=c * h * w)


_LAPLACIAN = torch.tensor([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def laplacian_batch(batch: torch.Tensor) -> torch.Tensor:
    luminance = rgb_to_luminance_batch(batch)
    kernel = _LAPLACIAN.to(dtype=batch.dtype, device=batch.device).view(1, 1, 3, 3)
    return F.conv2d(reflect_pad(luminance, 1, 1), kernel)


def laplacian_energy(image: ImageTensor, mask: Optional[torch.Tensor] = None) -> float:
    """Mean squared discrete Laplacian of the luminance over ``mask``."""
    response = laplacian_batch(image.batch())[0, 0] ** 2
    if mask is None:
        return float(response.mean())
    mask = mask.to(torch.bool)
    if tuple(mask.shape) != tuple(response.shape):
        raise DomainError.shape_mismatch(mask.shape, response.shape, "mask and image")
    if not bool(mask.any()):
        raise DomainError("Laplacian energy mask selects no pixels")
    return float(response[mask].mean())

"""
Per-frame quality metrics: SSIM, SIFID and PSNR.
"""

import logging
import math
from typing import Optional

import numpy as np
import torch
from scipy import linalg
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from src.backbones.encoders import PerceptualEncoder
from src.config import Config
from src.core.exceptions import DomainError
from src.imaging.filters import rgb_to_luminance_batch
from src.imaging.schemas import ImageTensor

logger = logging.getLogger(__name__)

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _same_shape(a: ImageTensor, b: ImageTensor, what: str) -> None:
    if a.shape != b.shape:
        raise DomainError.shape_mismatch(a.shape, b.shape, what)


def _luminance_array(frame: ImageTensor) -> np.ndarray:
    return rgb_to_luminance_batch(frame.batch().double())[0, 0].cpu().numpy()


def ssim(frame_a: ImageTensor, frame_b: ImageTensor) -> float:
    """Mean structural similarity of the luminance, Gaussian window, data range 1."""
    _same_shape(frame_a, frame_b, "SSIM inputs")
    size = 2 * SSIM_RADIUS + 1
    if frame_a.height < size or frame_a.width < size:
        raise DomainError(f"SSIM needs frames of at least {size}x{size}, got {frame_a.height}x{frame_a.width}")

    # truncate pins the window radius at SSIM_RADIUS for sigma 1.5
    value = structural_similarity(
        _luminance_array(frame_a),
        _luminance_array(frame_b),
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        truncate=SSIM_RADIUS / SSIM_SIGMA,
        use_sample_covariance=False,
        data_range=1.0,
        K1=SSIM_K1,
        K2=SSIM_K2,
    )
    return float(value)


def feature_statistics(encoder: PerceptualEncoder, image: ImageTensor, layer: Optional[str] = None):
    """Mean vector and unbiased covariance of the spatial feature columns."""
    layer = layer or encoder.sifid_layer
    with torch.no_grad():
        features = encoder(image.batch(), [layer])[layer][0]
    columns = features.reshape(features.shape[0], -1).double().cpu().numpy()
    mu = columns.mean(axis=1)
    sigma = np.atleast_2d(np.cov(columns, rowvar=True))
    return mu, sigma


def _trace_sqrt_product(sigma_1: np.ndarray, sigma_2: np.ndarray, epsilon: float) -> float:
    covmean = linalg.sqrtm(sigma_1.dot(sigma_2))
    if not np.isfinite(covmean).all():
        logger.warning(f"SIFID covariance product is singular; adding {epsilon} to the diagonals")
        offset = np.eye(sigma_1.shape[0]) * epsilon
        covmean = linalg.sqrtm((sigma_1 + offset).dot(sigma_2 + offset))
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    return float(np.trace(covmean))


def frechet_distance(mu_1: np.ndarray, sigma_1: np.ndarray, mu_2: np.ndarray, sigma_2: np.ndarray,
                     epsilon: Optional[float] = None) -> float:
    epsilon = Config.SIFID_EPSILON if epsilon is None else epsilon
    diff = mu_1 - mu_2
    # both product orders, so the distance is exactly symmetric
    tr_covmean = 0.5 * (_trace_sqrt_product(sigma_1, sigma_2, epsilon)
                        + _trace_sqrt_product(sigma_2, sigma_1, epsilon))
    distance = float(diff.dot(diff)) + float(np.trace(sigma_1)) + float(np.trace(sigma_2)) - 2.0 * tr_covmean
    return max(distance, 0.0)


def sifid(frame_a: ImageTensor, frame_b: ImageTensor, encoder: PerceptualEncoder,
          layer: Optional[str] = None, epsilon: Optional[float] = None) -> float:
    """Single-image Frechet distance at the encoder's SIFID tap."""
    _same_shape(frame_a, frame_b, "SIFID inputs")
    mu_a, sigma_a = feature_statistics(encoder, frame_a, layer)
    mu_b, sigma_b = feature_statistics(encoder, frame_b, layer)
    return frechet_distance(mu_a, sigma_a, mu_b, sigma_b, epsilon)


def psnr(frame_a: ImageTensor, frame_b: ImageTensor, mask: Optional[torch.Tensor] = None) -> float:
    """Peak signal-to-noise ratio in dB for data range 1; inf for identical inputs."""
    _same_shape(frame_a, frame_b, "PSNR inputs")
    a = frame_a.data.double().cpu().numpy()
    b = frame_b.data.double().cpu().numpy()
    if mask is not None:
        keep = mask.to(torch.bool).cpu().numpy()
        a, b = a[:, keep], b[:, keep]
    if np.array_equal(a, b):
        return math.inf
    return float(peak_signal_noise_ratio(a, b, data_range=1.0))

"""
2.5-D billboard compositor with exact ground-truth flow.

Every layer (the background and each sprite) moves by a whole-pixel offset
per frame, so flow vectors are integers and warping reproduces the next
frame exactly wherever the same layer stays visible.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
import torch

from src.core.exceptions import DomainError
from src.imaging.schemas import ColourSpace, FlowField, ImageTensor
from src.render_sim.schemas import GBufferFrame, SceneSpec, Sprite, SpriteShape

logger = logging.getLogger(__name__)

BACKGROUND_ID = 0


def _snap(value: float) -> int:
    # round half up, independent of banker's rounding
    return int(math.floor(value + 0.5))


def layer_offset(scene: SceneSpec, layer_id: int, t: int) -> Tuple[int, int]:
    """Whole-pixel screen offset of a layer at frame t; layer 0 is the background."""
    if layer_id == BACKGROUND_ID:
        return _snap(-scene.pan_velocity * t / scene.background_depth), 0
    sprite = scene.sprites[layer_id - 1]
    return (_snap(sprite.vx * t - scene.pan_velocity * t / sprite.depth),
            _snap(sprite.vy * t))


def background_texture(scene: SceneSpec) -> np.ndarray:
    """Smooth seeded rgb texture, periodic along x with period ``width``."""
    rng = np.random.default_rng(scene.background_seed)
    h, w = scene.height, scene.width
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    texture = np.empty((h, w, 3), dtype=np.float64)
    max_freq = max(2, w // 6)
    for c in range(3):
        channel = np.zeros((h, w))
        for _ in range(6):
            fx = rng.integers(1, max_freq + 1)
            fy = rng.uniform(0.5, max(1.0, h / 6.0))
            phase = rng.uniform(0, 2 * np.pi, size=2)
            channel += np.sin(2 * np.pi * fx * xs / w + phase[0]) * np.cos(2 * np.pi * fy * ys / h + phase[1])
        channel /= 6.0
        texture[:, :, c] = 0.5 + 0.35 * channel
    return np.clip(texture, 0.0, 1.0)


def _sprite_layer(sprite: Sprite, offset: Tuple[int, int], h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    """Footprint mask and rgb texture of a sprite at an integer offset."""
    # integer part first so shifted pixels see identical local coordinates
    local_x = (np.arange(w)[None, :] - offset[0]) + (0.5 - sprite.x0)
    local_y = (np.arange(h)[:, None] - offset[1]) + (0.5 - sprite.y0)
    local_x, local_y = np.broadcast_arrays(local_x, local_y)

    half_w, half_h = sprite.width / 2.0, sprite.height / 2.0
    if sprite.shape == SpriteShape.DISC:
        footprint = (local_x / half_w) ** 2 + (local_y / half_h) ** 2 <= 1.0
    else:
        footprint = (np.abs(local_x) <= half_w) & (np.abs(local_y) <= half_h)

    stripes = 1.0 - sprite.stripe_contrast * 0.5 * (1.0 + np.cos(2 * np.pi * local_x / sprite.stripe_period))
    texture = stripes[:, :, None] * np.asarray(sprite.albedo, dtype=np.float64)[None, None, :]
    return footprint, texture


def _paint_order(scene: SceneSpec) -> List[int]:
    """Sprite layer ids, farthest first (painter's order); ties keep list order."""
    return sorted(range(1, len(scene.sprites) + 1), key=lambda i: -scene.sprites[i - 1].depth)


def rasterise_layers(scene: SceneSpec, t: int,
                     background: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(colour H x W x 3, depth H x W, layer ids H x W) for frame t."""
    h, w = scene.height, scene.width
    if background is None:
        background = background_texture(scene)

    shift, _ = layer_offset(scene, BACKGROUND_ID, t)
    colour = np.roll(background, shift, axis=1).copy()
    depth = np.full((h, w), scene.background_depth, dtype=np.float64)
    ids = np.full((h, w), BACKGROUND_ID, dtype=np.int64)

    for layer_id in _paint_order(scene):
        sprite = scene.sprites[layer_id - 1]
        footprint, texture = _sprite_layer(sprite, layer_offset(scene, layer_id, t), h, w)
        colour[footprint] = texture[footprint]
        depth[footprint] = sprite.depth
        ids[footprint] = layer_id
    return colour, depth, ids


def _flow_between(scene: SceneSpec, t: int, ids_t: np.ndarray, ids_next: np.ndarray) -> FlowField:
    h, w = scene.height, scene.width
    dx = np.zeros((h, w), dtype=np.int64)
    dy = np.zeros((h, w), dtype=np.int64)
    for layer_id in range(len(scene.sprites) + 1):
        where = ids_t == layer_id
        if not where.any():
            continue
        x_now, y_now = layer_offset(scene, layer_id, t)
        x_next, y_next = layer_offset(scene, layer_id, t + 1)
        dx[where] = x_next - x_now
        dy[where] = y_next - y_now

    ys, xs = np.mgrid[0:h, 0:w]
    tx, ty = xs + dx, ys + dy
    inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    valid = np.zeros((h, w), dtype=bool)
    valid[inside] = ids_next[ty[inside], tx[inside]] == ids_t[inside]

    vectors = torch.from_numpy(np.stack([dx, dy]).astype(np.float32))
    return FlowField(vectors=vectors, validity_mask=torch.from_numpy(valid))


def ground_truth_flow(scene: SceneSpec, t: int) -> FlowField:
    """Forward flow of frame t into t+1; disoccluded pixels are masked invalid."""
    if not 0 <= t < scene.frame_count - 1:
        raise DomainError(f"Flow frame index {t} out of range for {scene.frame_count} frames",
                          {"t": t, "frame_count": scene.frame_count})
    background = background_texture(scene)
    _, _, ids_t = rasterise_layers(scene, t, background)
    _, _, ids_next = rasterise_layers(scene, t + 1, background)
    return _flow_between(scene, t, ids_t, ids_next)


def rasterise(scene: SceneSpec) -> List[GBufferFrame]:
    """Colour, depth and flow buffers for every frame of the scene."""
    background = background_texture(scene)
    layers = [rasterise_layers(scene, t, background) for t in range(scene.frame_count + 1)]

    frames = []
    for t in range(scene.frame_count):
        colour, depth, ids = layers[t]
        flow = _flow_between(scene, t, ids, layers[t + 1][2])
        frames.append(GBufferFrame(
            index=t,
            colour=ImageTensor.from_numpy(colour.astype(np.float32), ColourSpace.RGB),
            depth=ImageTensor.from_numpy(depth.astype(np.float32), ColourSpace.LUMINANCE),
            flow=flow,
        ))
    logger.debug(f"Rasterised {scene.frame_count} frames at {scene.height}x{scene.width}")
    return frames


def random_scene(seed: int, height: int = 64, width: int = 64, frame_count: int = 8,
                 sprite_count: int = 3, pan_velocity: Optional[float] = None) -> SceneSpec:
    rng = np.random.default_rng(seed)
    if pan_velocity is None:
        pan_velocity = float(rng.integers(1, 4))
    sprites = []
    for _ in range(sprite_count):
        sprites.append(Sprite(
            shape=SpriteShape.DISC if rng.random() < 0.5 else SpriteShape.RECT,
            x0=float(rng.uniform(0, width)),
            y0=float(rng.uniform(0, height)),
            vx=float(rng.uniform(-1.5, 1.5)),
            vy=float(rng.uniform(-1.0, 1.0)),
            width=float(rng.uniform(width / 6, width / 3)),
            height=float(rng.uniform(height / 6, height / 3)),
            depth=float(rng.uniform(0.3, 0.9)),
            albedo=tuple(float(a) for a in rng.uniform(0.2, 0.9, size=3)),
            stripe_period=float(rng.uniform(3, 8)),
            stripe_contrast=float(rng.uniform(0.3, 0.8)),
        ))
    return SceneSpec(
        height=height, width=width, frame_count=frame_count, pan_velocity=pan_velocity,
        background_seed=int(rng.integers(0, 2 ** 31)), sprites=sprites,
    )

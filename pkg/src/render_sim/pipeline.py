"""
The render loop: rasterise, inject the stylisation pass, run post effects.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from tqdm import tqdm

from src.core.exceptions import DomainError
from src.core.storage import LocalArtifactStore
from src.imaging.schemas import ImageTensor
from src.render_sim.post_effects import apply_post_stack
from src.render_sim.raster import rasterise
from src.render_sim.schemas import GBufferFrame, InjectionMode, PostEffectStack, SceneSpec
from src.style_network.model import StyleModel
from src.style_network.services import ModelPass, StylisationPass, check_resolution

logger = logging.getLogger(__name__)


@dataclass
class RenderedSequence:
    frames: List[ImageTensor]
    gbuffers: List[GBufferFrame]
    mode: InjectionMode


def render_sequence(scene: SceneSpec, stack: PostEffectStack, mode: InjectionMode,
                    model: Optional[StyleModel] = None,
                    stylisation_pass: Optional[StylisationPass] = None) -> RenderedSequence:
    mode = InjectionMode(mode)
    custom_pass = None
    if mode != InjectionMode.NONE:
        if stylisation_pass is None and model is None:
            raise DomainError(f"Injection mode '{mode.value}' needs a style model or a stylisation pass")
        check_resolution(scene.height, scene.width)
        custom_pass = stylisation_pass if stylisation_pass is not None else ModelPass(model)

    gbuffers = rasterise(scene)
    frames = []
    for frame in tqdm(gbuffers, desc=f"render[{mode.value}]", disable=None):
        if mode == InjectionMode.BEFORE_POST:
            # custom pass writes the colour buffer, post stack reads it
            final = apply_post_stack(frame, stack, custom_pass(frame.colour))
        elif mode == InjectionMode.AFTER_POST:
            final = custom_pass(apply_post_stack(frame, stack))
        else:
            final = apply_post_stack(frame, stack)
        frames.append(final)
    return RenderedSequence(frames=frames, gbuffers=gbuffers, mode=mode)


def save_sequence(store: LocalArtifactStore, sequence: RenderedSequence,
                  scene: Optional[SceneSpec] = None) -> Path:
    """Frames and colour buffers as PNG, depth as PNG, flows as .flo with PNG masks."""
    for t, (final, gbuffer) in enumerate(zip(sequence.frames, sequence.gbuffers)):
        name = f"{t:04d}"
        store.save_image(final, f"frame_{name}.png", folder="frames")
        store.save_image(gbuffer.colour, f"frame_{name}.png", folder="colour")
        store.save_image(gbuffer.depth, f"depth_{name}.png", folder="depth")
        if t < len(sequence.frames) - 1:
            store.save_flow(gbuffer.flow, f"flow_{name}.flo")
            store.save_mask(gbuffer.flow, f"flow_{name}.png")
    if scene is not None:
        store.save_json(scene, "scene.json")
    logger.info(f"Saved {len(sequence.frames)} frames to {store.root}")
    return store.root

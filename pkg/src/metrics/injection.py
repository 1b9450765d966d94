"""
Stylising before versus after the post stack, measured on panning scenes
rendered with depth of field.
"""

import logging
import math
from typing import Dict, Iterable, Optional, Tuple

import torch
import torch.nn.functional as F

from src.imaging.filters import laplacian_energy
from src.metrics.schemas import InjectionComparisonReport, ModeMeasurement, SceneComparison
from src.metrics.temporal import warping_error
from src.render_sim.pipeline import RenderedSequence, render_sequence
from src.render_sim.raster import random_scene
from src.render_sim.schemas import DepthOfField, InjectionMode, PostEffectStack
from src.style_network.services import StylisationPass

logger = logging.getLogger(__name__)


def default_dof_stack() -> PostEffectStack:
    # background (depth 1) in focus, every sprite blurred
    return PostEffectStack(effects=[DepthOfField(focal_depth=1.0, blur_scale=12.0, max_radius=6)])


def _erode(mask: torch.Tensor, pixels: int) -> torch.Tensor:
    if pixels == 0:
        return mask
    outside = (~mask).float().view(1, 1, *mask.shape)
    grown = F.max_pool2d(outside, 2 * pixels + 1, stride=1, padding=pixels)
    return grown[0, 0] == 0


def focus_masks(depth: torch.Tensor, effect: DepthOfField, margin: int = 2) -> Tuple[torch.Tensor, torch.Tensor]:
    """(in-focus, out-of-focus) masks from an H x W depth buffer, eroded by ``margin``."""
    radius = effect.blur_scale * (depth - effect.focal_depth).abs()
    in_focus = radius < 0.5
    out_of_focus = radius >= 1.0
    return _erode(in_focus, margin), _erode(out_of_focus, margin)


def dof_ratio(sequence: RenderedSequence, effect: DepthOfField) -> float:
    """Mean over frames of out-of-focus / in-focus mean squared Laplacian."""
    ratios = []
    for frame, gbuffer in zip(sequence.frames, sequence.gbuffers):
        in_focus, out_of_focus = focus_masks(gbuffer.depth.data[0], effect)
        if not bool(in_focus.any()) or not bool(out_of_focus.any()):
            continue
        energy_in = laplacian_energy(frame, in_focus)
        if energy_in == 0.0:
            continue
        ratios.append(laplacian_energy(frame, out_of_focus) / energy_in)
    if not ratios:
        logger.warning("No frame holds both in-focus and out-of-focus pixels")
        return math.nan
    return sum(ratios) / len(ratios)


def _measure(sequence: RenderedSequence, effect: DepthOfField) -> ModeMeasurement:
    flows = [gbuffer.flow for gbuffer in sequence.gbuffers[:-1]]
    return ModeMeasurement(
        mode=sequence.mode.value,
        warping_error=warping_error(sequence.frames, flows),
        dof_ratio=dof_ratio(sequence, effect),
    )


def compare_injection_modes(stylisation_pass: StylisationPass, seeds: Iterable[int] = range(10),
                            stack: Optional[PostEffectStack] = None, height: int = 64, width: int = 64,
                            frame_count: int = 6,
                            thresholds: Optional[Dict[str, float]] = None) -> InjectionComparisonReport:
    stack = stack or default_dof_stack()
    effect = next((e for e in stack.effects if isinstance(e, DepthOfField)), None)
    if effect is None:
        effect = default_dof_stack().effects[0]

    scenes = []
    for seed in seeds:
        scene = random_scene(seed, height=height, width=width, frame_count=frame_count)
        before = render_sequence(scene, stack, InjectionMode.BEFORE_POST, stylisation_pass=stylisation_pass)
        after = render_sequence(scene, stack, InjectionMode.AFTER_POST, stylisation_pass=stylisation_pass)
        comparison = SceneComparison(seed=seed, before_post=_measure(before, effect),
                                     after_post=_measure(after, effect))
        logger.info(f"Scene {seed}: warping {comparison.before_post.warping_error:.5f} (before) vs "
                    f"{comparison.after_post.warping_error:.5f} (after)")
        scenes.append(comparison)

    def _finite_mean(values):
        values = [v for v in values if math.isfinite(v)]
        return sum(values) / len(values) if values else math.nan

    return InjectionComparisonReport(
        scenes=scenes,
        before_post_stabler=sum(scene.before_is_stabler for scene in scenes),
        mean_dof_ratio_before=_finite_mean([s.before_post.dof_ratio for s in scenes]),
        mean_dof_ratio_after=_finite_mean([s.after_post.dof_ratio for s in scenes]),
        thresholds=thresholds,
    )

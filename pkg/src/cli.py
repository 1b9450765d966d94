"""
Command line surface: train, stylise, simulate, evaluate and export.

Every subcommand writes exactly one ``manifest.json`` into its output
directory and returns a process exit code (0 success, 1 usage, 2 runtime).
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

import torch

from src import __version__
from src.backbones.services import get_encoder, load_backbones
from src.config import Config
from src.core.error_handlers import handle_exception
from src.core.exceptions import EXIT_OK, EXIT_RUNTIME, UsageError
from src.core.manifest import RunManifest, write_manifest
from src.core.storage import LocalArtifactStore, read_image, write_image, write_json
from src.datasets.services import build_mixed_dataset
from src.metrics.injection import compare_injection_modes, default_dof_stack
from src.metrics.plots import plot_frame_traces, plot_loss_curve
from src.metrics.services import evaluate_sequence, render_table, write_report
from src.metrics.temporal import PerceptualDistance
from src.render_sim.pipeline import render_sequence, save_sequence
from src.render_sim.raster import random_scene
from src.render_sim.schemas import InjectionMode, PostEffectStack, SceneSpec
from src.style_network.export import export_graph, verify_export
from src.style_network.services import IdentityPass, ModelPass, stylise
from src.trainer.checkpoint import load_model_from_checkpoint
from src.trainer.schemas import ABLATIONS, AblationFlags, RunConfig
from src.trainer.services import train

logger = logging.getLogger(__name__)

SMOKE_STEPS = 200


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems as UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}", {"usage": self.format_usage().strip()})


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or Config.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _out_dir(args, command: str) -> Path:
    out_dir = Path(args.out_dir) if args.out_dir else Path(Config.OUTPUT_DIR) / command
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


# |--- train ---|
def cmd_train(args, manifest: RunManifest) -> None:
    config = RunConfig.load(args.config)
    training, corpus, backbones = config.training, config.corpus, config.backbones

    if args.seed is not None:
        training = training.model_copy(update={"seed": args.seed})
        corpus = corpus.model_copy(update={"shuffle_seed": args.seed})
        backbones = backbones.model_copy(update={"seed": args.seed})
    if args.ablate:
        merged = set(args.ablate) | {name for name in ABLATIONS if getattr(training.ablations, f"no_{name}")}
        training = training.model_copy(update={"ablations": AblationFlags.from_names(merged)})
    corpus = training.effective_corpus(corpus)
    if args.smoke:
        backbones = backbones.model_copy(update={"profile": "tiny", "depth_backend": "channel_mean"})
        training = training.model_copy(update={"max_steps": training.max_steps or SMOKE_STEPS})
    if args.max_steps is not None:
        training = training.model_copy(update={"max_steps": args.max_steps})

    out_dir = _out_dir(args, "train")
    encoder, depth_predictor = load_backbones(backbones.profile, backbones.depth_backend, backbones.seed,
                                              size=corpus.resize_to)
    dataset = build_mixed_dataset(corpus)
    manifest.add_artifact("dataset_manifest", write_json(out_dir / "dataset_manifest.json", dataset.manifest))

    style_path = Path(args.style) if args.style else config.style_image
    style_image = read_image(style_path)
    result = train(training, dataset, (encoder, depth_predictor), style_image, out_dir, resume_from=args.resume)

    manifest.config_hash = result.config_hash
    manifest.seeds = {**result.seeds, "backbone": backbones.seed}
    manifest.backbones = {"encoder": encoder.identifier, "depth": depth_predictor.identifier}
    manifest.add_artifact("checkpoint", result.checkpoint_path)
    manifest.add_artifact("log", result.log_path)
    if result.log:
        manifest.add_artifact("loss_curve", plot_loss_curve(result.log, out_dir / "loss_curve.png"))
        manifest.metrics = {"final_total": result.log[-1].total, "steps": float(result.log[-1].step)}


# |--- stylise ---|
def cmd_stylise(args, manifest: RunManifest) -> None:
    model = load_model_from_checkpoint(args.model)
    image = read_image(args.input)
    started = time.perf_counter()
    result = stylise(model, image)
    manifest.metrics = {"stylise_ms": (time.perf_counter() - started) * 1000.0}
    manifest.add_artifact("output", write_image(result, args.output))
    manifest.add_artifact("model", args.model)


# |--- simulate ---|
def _load_stack(path: Optional[str]) -> PostEffectStack:
    if path is None:
        return default_dof_stack()
    with open(path, "r", encoding="utf-8") as f:
        return PostEffectStack.model_validate(json.load(f))


def cmd_simulate(args, manifest: RunManifest) -> None:
    if args.scene:
        scene = SceneSpec.load(args.scene)
    else:
        scene = random_scene(args.seed or 0, height=args.size, width=args.size, frame_count=args.frames)
        manifest.seeds = {"scene": args.seed or 0}
    stack = _load_stack(args.stack)
    mode = InjectionMode(args.mode)
    model = load_model_from_checkpoint(args.model) if args.model else None
    if mode != InjectionMode.NONE and model is None:
        raise UsageError(f"--mode {mode.value} needs --model")

    sequence = render_sequence(scene, stack, mode, model=model)
    store = LocalArtifactStore(_out_dir(args, "simulate"))
    save_sequence(store, sequence, scene)
    store.save_json(stack, "stack.json")
    manifest.add_artifact("frames", store.path("frames"))
    manifest.add_artifact("flows", store.path("flows"))


# |--- evaluate ---|
def cmd_evaluate(args, manifest: RunManifest) -> None:
    out_dir = _out_dir(args, "evaluate")
    store = LocalArtifactStore(out_dir)
    profile = args.profile or Config.BACKBONE_PROFILE

    if args.compare:
        if sorted(args.compare) != sorted([InjectionMode.BEFORE_POST.value, InjectionMode.AFTER_POST.value]):
            raise UsageError("--compare expects before_post after_post")
        if args.model:
            custom_pass = ModelPass(load_model_from_checkpoint(args.model))
        else:
            logger.warning("No --model given; comparing with the identity pass")
            custom_pass = IdentityPass()
        seed = args.seed or 0
        thresholds = None
        if args.thresholds:
            with open(args.thresholds, "r", encoding="utf-8") as f:
                thresholds = json.load(f)
        report = compare_injection_modes(custom_pass, seeds=range(seed, seed + args.scenes),
                                         height=args.size, width=args.size, frame_count=args.frames,
                                         thresholds=thresholds)
        write_report(store, report, "comparison")
        plot_frame_traces({
            "before_post": [s.before_post.warping_error for s in report.scenes],
            "after_post": [s.after_post.warping_error for s in report.scenes],
        }, out_dir / "comparison.png", ylabel="warping error per scene")
        manifest.seeds = {"scenes": seed}
        manifest.metrics = {
            "before_post_stabler": float(report.before_post_stabler),
            "mean_dof_ratio_before": report.mean_dof_ratio_before,
            "mean_dof_ratio_after": report.mean_dof_ratio_after,
        }
        manifest.add_artifact("report", store.path("comparison.json"))
        print(report.model_dump_json(indent=2))
        return

    missing = [flag for flag, value in (("--original", args.original), ("--stylised", args.stylised),
                                        ("--flows", args.flows), ("--style", args.style)) if not value]
    if missing:
        raise UsageError(f"evaluate needs {', '.join(missing)} (or --compare)")

    original = LocalArtifactStore(args.original).load_images(".")
    stylised = LocalArtifactStore(args.stylised).load_images(".")
    flows = store.load_flows(str(Path(args.flows).resolve()),
                             str(Path(args.masks).resolve()) if args.masks else None)
    encoder = get_encoder(profile, seed=args.seed or 0)
    perceptual = PerceptualDistance(args.perceptual, encoder=encoder)

    report = evaluate_sequence(original, stylised, flows, read_image(args.style), encoder, perceptual,
                               sequence=Path(args.stylised).name, style=Path(args.style).stem,
                               flow_source="flo")
    write_report(store, report)
    plot_frame_traces({"warping": report.per_sequence[0].warping_trace}, out_dir / "warping_trace.png")
    manifest.backbones = {"encoder": encoder.identifier, "perceptual": perceptual.identifier}
    manifest.metrics = {name: getattr(report, name) for name in ("warping_error", "perceptual_error", "ssim",
                                                                 "sifid", "content_err", "style_err")}
    manifest.add_artifact("report", store.path("report.json"))
    print(render_table(report))


# |--- export ---|
def cmd_export(args, manifest: RunManifest) -> None:
    model = load_model_from_checkpoint(args.model)
    export = export_graph(model, args.output, opset=args.opset)
    seed = args.seed or 0
    sample = torch.rand(1, 3, 360, 360, generator=torch.Generator().manual_seed(seed))
    export.max_abs_deviation = verify_export(args.output, model, sample)
    out_dir = _out_dir(args, "export")
    manifest.add_artifact("graph", export.path)
    manifest.add_artifact("export_manifest", write_json(out_dir / "export.json", export))
    manifest.metrics = {"max_abs_deviation": export.max_abs_deviation}
    manifest.seeds = {"sample": seed}


COMMANDS: Dict[str, Callable] = {
    "train": cmd_train,
    "stylise": cmd_stylise,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "export": cmd_export,
}


def build_parser() -> CliParser:
    parser = CliParser(prog="python -m src", description="Style transfer for rendered frames")
    parser.add_argument("--log-level", default=None, help="overrides LOG_LEVEL")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)

    p = sub.add_parser("train", help="train a style network")
    common(p)
    p.add_argument("--config", required=True, help="run config (JSON or TOML)")
    p.add_argument("--style", default=None, help="overrides the config's style image")
    p.add_argument("--ablate", action="append", choices=ABLATIONS, default=[])
    p.add_argument("--smoke", action="store_true", help="tiny backbones and a short step budget")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")

    p = sub.add_parser("stylise", help="stylise one image")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)

    p = sub.add_parser("simulate", help="render a procedural scene")
    common(p)
    p.add_argument("--scene", default=None, help="scene spec JSON; random scene from --seed otherwise")
    p.add_argument("--stack", default=None, help="post-effect stack JSON; depth of field by default")
    p.add_argument("--mode", default=InjectionMode.NONE.value, choices=[m.value for m in InjectionMode])
    p.add_argument("--model", default=None)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--frames", type=int, default=8)

    p = sub.add_parser("evaluate", help="score a stylised sequence or compare injection points")
    common(p)
    p.add_argument("--original", default=None)
    p.add_argument("--stylised", default=None)
    p.add_argument("--flows", default=None, help="directory of .flo files")
    p.add_argument("--masks", default=None, help="directory of flow validity PNGs")
    p.add_argument("--style", default=None)
    p.add_argument("--profile", default=None, choices=["vgg16", "tiny"])
    p.add_argument("--perceptual", default=None, choices=["lpips", "encoder"])
    p.add_argument("--compare", nargs=2, default=None, metavar="MODE",
                   choices=[InjectionMode.BEFORE_POST.value, InjectionMode.AFTER_POST.value])
    p.add_argument("--model", default=None)
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--frames", type=int, default=6)
    p.add_argument("--thresholds", default=None, help="JSON of pilot thresholds to record")

    p = sub.add_parser("export", help="export a checkpoint to ONNX and verify it")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--opset", type=int, default=None)
    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)
    except Exception as e:
        return handle_exception(e)

    configure_logging(args.log_level)
    manifest = RunManifest(command=args.command, argv=argv, tool_version=__version__)
    started = time.perf_counter()
    exit_code = EXIT_RUNTIME
    try:
        COMMANDS[args.command](args, manifest)
        exit_code = EXIT_OK
    except Exception as e:
        exit_code = handle_exception(e)
        manifest.error = {"type": e.__class__.__name__, "message": str(getattr(e, "message", e))}
    finally:
        manifest.wall_clock_s = time.perf_counter() - started
        manifest.exit_code = exit_code
        manifest.status = "ok" if exit_code == EXIT_OK else "failed"
        try:
            out_dir = _out_dir(args, args.command)
            write_manifest(out_dir, manifest)
        except OSError as e:
            logger.warning(f"Could not write the run manifest: {e}")
        else:
            logger.info(f"{args.command} {manifest.status} after {manifest.wall_clock_s:.1f} s; manifest in {out_dir}")
    return exit_code

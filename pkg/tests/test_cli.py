import json

import numpy as np
import pytest
from PIL import Image

from src.cli import run_cli
from src.core.exceptions import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE
from src.style_network.model import build_network
from src.trainer.checkpoint import save_checkpoint
from src.trainer.schemas import TrainerState
from tests.conftest import write_png


def _manifest(directory) -> dict:
    with open(directory / "manifest.json", "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def checkpoint(tmp_path):
    return save_checkpoint(tmp_path / "model.ckpt", build_network(0), None, TrainerState())


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert run_cli(["simulate", "--seed", "3", "--size", "32", "--frames", "3", "--out-dir", str(out)]) == EXIT_OK
    return out


class TestUsage:
    """Test command line parsing."""

    def test_unknown_flag(self, capsys):
        assert run_cli(["simulate", "--bogus"]) == EXIT_USAGE
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["error"]["type"] == "UsageError"

    def test_missing_command(self):
        assert run_cli([]) == EXIT_USAGE

    def test_unknown_ablation(self, tmp_path):
        assert run_cli(["train", "--config", str(tmp_path / "c.json"), "--ablate", "colour"]) == EXIT_USAGE

    def test_version(self):
        assert run_cli(["--version"]) == EXIT_OK

    def test_evaluate_needs_inputs(self, tmp_path):
        assert run_cli(["evaluate", "--out-dir", str(tmp_path)]) == EXIT_USAGE

    def test_mode_needs_model(self, tmp_path):
        assert run_cli(["simulate", "--mode", "before_post", "--out-dir", str(tmp_path)]) == EXIT_USAGE
        manifest = _manifest(tmp_path)
        assert manifest["status"] == "failed"
        assert manifest["exit_code"] == EXIT_USAGE
        assert manifest["error"]["type"] == "UsageError"


class TestSimulate:
    """Test the simulate command."""

    def test_writes_sequence(self, simulated):
        assert len(list((simulated / "frames").glob("*.png"))) == 3
        assert len(list((simulated / "flows").glob("*.flo"))) == 2
        assert (simulated / "scene.json").exists()
        manifest = _manifest(simulated)
        assert manifest["command"] == "simulate"
        assert manifest["seeds"] == {"scene": 3}

    def test_with_model(self, tmp_path, checkpoint):
        out = tmp_path / "styled"
        code = run_cli(["simulate", "--seed", "1", "--size", "32", "--frames", "2", "--mode", "before_post",
                        "--model", str(checkpoint), "--out-dir", str(out)])
        assert code == EXIT_OK
        assert len(list((out / "frames").glob("*.png"))) == 2

    def test_indivisible_size(self, tmp_path, checkpoint):
        code = run_cli(["simulate", "--size", "30", "--frames", "2", "--mode", "after_post",
                        "--model", str(checkpoint), "--out-dir", str(tmp_path / "bad")])
        assert code == EXIT_RUNTIME


class TestStylise:
    """Test the stylise command."""

    def test_stylise(self, tmp_path, checkpoint):
        source = write_png(tmp_path / "in.png", np.full((32, 48, 3), 120, dtype=np.uint8))
        code = run_cli(["stylise", "--model", str(checkpoint), "--in", str(source),
                        "--out", str(tmp_path / "out.png"), "--out-dir", str(tmp_path / "run")])
        assert code == EXIT_OK
        with Image.open(tmp_path / "out.png") as result:
            assert result.size == (48, 32)
        manifest = _manifest(tmp_path / "run")
        assert "stylise_ms" in manifest["metrics"]
        assert manifest["status"] == "ok" and manifest["exit_code"] == EXIT_OK

    def test_missing_checkpoint(self, tmp_path):
        source = write_png(tmp_path / "in.png", np.zeros((32, 32, 3), dtype=np.uint8))
        code = run_cli(["stylise", "--model", str(tmp_path / "absent.ckpt"), "--in", str(source),
                        "--out", str(tmp_path / "out.png"), "--out-dir", str(tmp_path / "run")])
        assert code == EXIT_RUNTIME
        manifest = _manifest(tmp_path / "run")
        assert manifest["status"] == "failed"
        assert manifest["exit_code"] == EXIT_RUNTIME
        assert manifest["argv"][:3] == ["stylise", "--model", str(tmp_path / "absent.ckpt")]

    def test_indivisible_image(self, tmp_path, checkpoint):
        source = write_png(tmp_path / "in.png", np.zeros((30, 32, 3), dtype=np.uint8))
        code = run_cli(["stylise", "--model", str(checkpoint), "--in", str(source),
                        "--out", str(tmp_path / "out.png"), "--out-dir", str(tmp_path / "run")])
        assert code == EXIT_RUNTIME


class TestEvaluate:
    """Test the evaluate command."""

    def test_sequence(self, tmp_path, simulated, style_image_path):
        out = tmp_path / "eval"
        code = run_cli(["evaluate", "--original", str(simulated / "colour"), "--stylised", str(simulated / "frames"),
                        "--flows", str(simulated / "flows"), "--masks", str(simulated / "masks"),
                        "--style", str(style_image_path), "--profile", "tiny", "--perceptual", "encoder",
                        "--out-dir", str(out)])
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["per_sequence"][0]["frame_count"] == 3
        assert report["per_sequence"][0]["flow_source"] == "flo"
        assert (out / "report.txt").exists()
        assert "warping_error" in _manifest(out)["metrics"]

    def test_compare(self, tmp_path):
        out = tmp_path / "compare"
        code = run_cli(["evaluate", "--compare", "before_post", "after_post", "--scenes", "2", "--size", "32",
                        "--frames", "3", "--out-dir", str(out)])
        assert code == EXIT_OK
        report = json.loads((out / "comparison.json").read_text())
        assert len(report["scenes"]) == 2
        assert (out / "comparison.png").exists()


class TestTrain:
    """Test the train command."""

    @pytest.fixture
    def config_path(self, tmp_path, photo_dir, style_image_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({
            "corpus": {"photo_dir": str(photo_dir), "resize_to": [16, 16]},
            "style_image": str(style_image_path),
            "training": {"batch_size": 2},
        }))
        return path

    def test_smoke(self, tmp_path, config_path):
        out = tmp_path / "train"
        code = run_cli(["train", "--config", str(config_path), "--smoke", "--max-steps", "3",
                        "--seed", "4", "--ablate", "synthetic", "--out-dir", str(out)])
        assert code == EXIT_OK
        manifest = _manifest(out)
        assert manifest["seeds"] == {"model": 4, "shuffle": 4, "backbone": 4}
        assert manifest["backbones"]["depth"] == "channel_mean"
        assert manifest["metrics"]["steps"] == 3.0
        assert (out / "checkpoints" / "final.ckpt").exists()
        assert (out / "dataset_manifest.json").exists()
        assert (out / "loss_curve.png").exists()

    def test_resume(self, tmp_path, config_path):
        out = tmp_path / "train"
        assert run_cli(["train", "--config", str(config_path), "--smoke", "--max-steps", "2",
                        "--out-dir", str(out)]) == EXIT_OK
        code = run_cli(["train", "--config", str(config_path), "--smoke", "--max-steps", "3",
                        "--resume", str(out / "checkpoints" / "final.ckpt"), "--out-dir", str(out)])
        assert code == EXIT_OK
        assert len((out / "train_log.jsonl").read_text().splitlines()) == 3

    def test_missing_config(self, tmp_path):
        assert run_cli(["train", "--config", str(tmp_path / "absent.json"), "--smoke"]) == EXIT_RUNTIME


class TestExport:
    """Test the export command."""

    def test_export(self, tmp_path, checkpoint, thresholds):
        out = tmp_path / "export"
        code = run_cli(["export", "--model", str(checkpoint), "--out", str(out / "model.onnx"),
                        "--out-dir", str(out)])
        assert code == EXIT_OK
        manifest = _manifest(out)
        assert manifest["metrics"]["max_abs_deviation"] < thresholds["export"]["max_abs_deviation"]
        assert (out / "export.json").exists()

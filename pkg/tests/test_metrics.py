import json
import math

import numpy as np
import pytest
import torch
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from src.backbones.depth import ChannelMeanDepth
from src.backbones.encoders import LinearTestEncoder
from src.core.exceptions import ConfigurationError, DomainError
from src.core.storage import LocalArtifactStore, read_image
from src.datasets.schemas import CorpusSpec
from src.datasets.services import build_mixed_dataset
from src.imaging.schemas import FlowField, ImageTensor
from src.metrics.injection import compare_injection_modes, default_dof_stack, focus_masks
from src.metrics.plots import plot_frame_traces, plot_loss_curve
from src.metrics.quality import frechet_distance, psnr, sifid, ssim
from src.metrics.schemas import SequenceMetrics, SequenceMetricsReport
from src.metrics.services import aggregate_reports, evaluate_sequence, render_table, write_report
from src.metrics.temporal import PerceptualDistance, warping_error, warping_errors
from src.render_sim.raster import random_scene, rasterise
from src.style_network.services import IdentityPass, ModelPass
from src.trainer.schemas import TrainConfig, TrainLogRecord
from src.trainer.services import train
from tests.conftest import write_corpus


def _grey(array: np.ndarray) -> ImageTensor:
    return ImageTensor.rgb(torch.from_numpy(np.repeat(array[None], 3, axis=0)))


def _metrics(style: str, sequence: str, value: float) -> SequenceMetrics:
    return SequenceMetrics(
        sequence=sequence, style=style, frame_count=4,
        warping_error=value, warping_error_unmasked=2 * value, perceptual_error=value / 2,
        ssim=0.5, sifid=value, content_err=value, style_err=value,
    )


class TestWarpingError:
    """Test the flow-warping error."""

    def test_static_frames(self, make_image):
        frame = make_image(8, 8, seed=1)
        assert warping_error([frame] * 3, [FlowField.zeros(8, 8)] * 2) == 0.0

    def test_rendered_scene_is_consistent(self):
        frames = rasterise(random_scene(4, height=32, width=32, frame_count=4))
        error = warping_error([f.colour for f in frames], [f.flow for f in frames[:-1]])
        assert error == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed(self):
        first = ImageTensor.rgb(torch.zeros(3, 4, 4))
        values = torch.full((3, 4, 4), 0.5)
        values[:, :, 2:] = 1.0
        second = ImageTensor.rgb(values)
        mask = torch.zeros(4, 4, dtype=torch.bool)
        mask[:, :2] = True
        flow = FlowField(vectors=torch.zeros(2, 4, 4), validity_mask=mask)
        assert warping_errors([first, second], [flow]) == [pytest.approx(0.25)]
        assert warping_errors([first, second], [flow], masked=False) == [pytest.approx(0.625)]

    def test_empty_mask_contributes_zero(self, make_image):
        flow = FlowField(vectors=torch.zeros(2, 8, 8), validity_mask=torch.zeros(8, 8, dtype=torch.bool))
        assert warping_errors([make_image(8, 8, seed=1), make_image(8, 8, seed=2)], [flow]) == [0.0]

    def test_length_mismatch(self, make_image):
        with pytest.raises(DomainError):
            warping_error([make_image(8, 8)] * 3, [FlowField.zeros(8, 8)])


class TestPerceptualDistance:
    """Test the encoder-feature perceptual distance."""

    @pytest.fixture
    def metric(self, tiny_encoder) -> PerceptualDistance:
        return PerceptualDistance("encoder", tiny_encoder)

    def test_identical(self, metric, make_image):
        image = make_image(24, 24, seed=3)
        assert metric(image, image) == 0.0

    def test_grows_with_noise(self, metric, make_image):
        image = make_image(24, 24, seed=4)
        noise = torch.randn(3, 24, 24, generator=torch.Generator().manual_seed(0))
        distances = [metric(image, ImageTensor.rgb((image.data + level * noise).clamp(0, 1)))
                     for level in (0.01, 0.05, 0.1)]
        assert distances[0] < distances[1] < distances[2]

    def test_unknown_backend(self):
        with pytest.raises(ConfigurationError):
            PerceptualDistance("ssim")

    def test_identifier(self, metric, tiny_encoder):
        assert metric.identifier == f"encoder-{tiny_encoder.identifier}"


class TestSsim:
    """Test SSIM against scikit-image."""

    def test_identical(self, make_image):
        image = make_image(20, 20, seed=5)
        assert ssim(image, image) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_scikit_image(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.random((32, 32)), rng.random((32, 32))
        expected = structural_similarity(a, b, gaussian_weights=True, sigma=1.5,
                                         use_sample_covariance=False, data_range=1.0)
        assert ssim(_grey(a), _grey(b)) == pytest.approx(expected, abs=1e-6)

    def test_inverted_binary_image(self):
        binary = (np.random.default_rng(9).random((24, 24)) > 0.5).astype(np.float64)
        expected = structural_similarity(binary, 1.0 - binary, gaussian_weights=True, sigma=1.5,
                                         use_sample_covariance=False, data_range=1.0)
        value = ssim(_grey(binary), _grey(1.0 - binary))
        assert value == pytest.approx(expected, abs=1e-6)
        assert value < 0.0

    def test_too_small(self, make_image):
        with pytest.raises(DomainError):
            ssim(make_image(8, 8), make_image(8, 8))


class TestSifid:
    """Test the single-image Frechet distance."""

    def test_identical(self, make_image):
        image = make_image(16, 16, seed=6, dtype=torch.float64)
        assert sifid(image, image, LinearTestEncoder()) == pytest.approx(0.0, abs=1e-9)

    def test_symmetric(self, make_image, tiny_encoder):
        a, b = make_image(24, 24, seed=7), make_image(24, 24, seed=8)
        assert sifid(a, b, tiny_encoder) == pytest.approx(sifid(b, a, tiny_encoder), rel=1e-12, abs=1e-15)

    def test_single_channel_closed_form(self, make_image):
        encoder = LinearTestEncoder(torch.full((1, 3), 1.0 / 3.0, dtype=torch.float64))
        a, b = make_image(12, 12, seed=9, dtype=torch.float64), make_image(12, 12, seed=10, dtype=torch.float64)
        fa, fb = a.data.mean(dim=0).numpy().ravel(), b.data.mean(dim=0).numpy().ravel()
        v1, v2 = fa.var(ddof=1), fb.var(ddof=1)
        expected = (fa.mean() - fb.mean()) ** 2 + (math.sqrt(v1) - math.sqrt(v2)) ** 2
        assert sifid(a, b, encoder) == pytest.approx(expected, rel=1e-6, abs=1e-12)

    def test_singular_covariances(self):
        mu = np.zeros(3)
        sigma = np.zeros((3, 3))
        assert frechet_distance(mu, sigma, mu + 1.0, sigma) == pytest.approx(3.0, abs=1e-4)


class TestPsnr:
    """Test PSNR."""

    def test_identical_is_infinite(self, make_image):
        image = make_image(8, 8)
        assert psnr(image, image) == math.inf

    def test_known_value(self):
        a = ImageTensor.rgb(torch.zeros(3, 4, 4))
        b = ImageTensor.rgb(torch.full((3, 4, 4), 0.1))
        assert psnr(a, b) == pytest.approx(20.0, rel=1e-6)

    def test_matches_scikit_image(self, make_image):
        a = make_image(16, 16, seed=11, dtype=torch.float64)
        b = make_image(16, 16, seed=12, dtype=torch.float64)
        expected = peak_signal_noise_ratio(a.data.numpy(), b.data.numpy(), data_range=1.0)
        assert psnr(a, b) == pytest.approx(expected, rel=1e-12)

    def test_mask_selects_pixels(self):
        a = ImageTensor.rgb(torch.zeros(3, 4, 4, dtype=torch.float64))
        noisy = torch.zeros(3, 4, 4, dtype=torch.float64)
        noisy[:, :2] = 0.1
        noisy[:, 2:] = 0.5
        mask = torch.zeros(4, 4, dtype=torch.bool)
        mask[:2] = True
        assert psnr(a, ImageTensor.rgb(noisy), mask) == pytest.approx(20.0, rel=1e-6)
        assert psnr(a, a, mask) == math.inf


class TestEvaluateSequence:
    """Test sequence evaluation and report aggregation."""

    @pytest.fixture
    def rendered(self):
        frames = rasterise(random_scene(6, height=32, width=32, frame_count=3))
        return [f.colour for f in frames], [f.flow for f in frames[:-1]]

    def test_identity_stylisation(self, rendered, tiny_encoder, make_image):
        frames, flows = rendered
        report = evaluate_sequence(frames, frames, flows, make_image(32, 32, seed=11), tiny_encoder,
                                   PerceptualDistance("encoder", tiny_encoder), sequence="pan", style="none")
        assert report.warping_error == pytest.approx(0.0, abs=1e-12)
        assert report.ssim == pytest.approx(1.0, abs=1e-9)
        assert report.content_err == 0.0
        assert report.sifid == pytest.approx(0.0, abs=1e-4)
        assert report.style_err > 0.0
        assert report.per_sequence[0].frame_count == 3
        assert len(report.per_sequence[0].warping_trace) == 2
        assert report.backbones == {"encoder": tiny_encoder.identifier}

    def test_frame_count_mismatch(self, rendered, tiny_encoder, make_image):
        frames, flows = rendered
        with pytest.raises(DomainError):
            evaluate_sequence(frames, frames[:2], flows, make_image(32, 32), tiny_encoder,
                              PerceptualDistance("encoder", tiny_encoder))

    def test_aggregate_means(self):
        report = aggregate_reports([_metrics("a", "s1", 0.1), _metrics("a", "s2", 0.3), _metrics("b", "s1", 0.8)])
        assert report.warping_error == pytest.approx(0.4)
        assert report.per_style["a"].warping_error == pytest.approx(0.2)
        assert report.per_style["b"].sifid == pytest.approx(0.8)
        assert len(report.per_sequence) == 3

    def test_aggregate_flattens_reports(self):
        first = aggregate_reports([_metrics("a", "s1", 0.1)], backbones={"encoder": "tiny"})
        second = aggregate_reports([_metrics("a", "s2", 0.3)])
        merged = aggregate_reports([first, second])
        assert merged.warping_error == pytest.approx(0.2)
        assert merged.backbones == {"encoder": "tiny"}

    def test_table_scales_temporal_columns(self):
        table = render_table(aggregate_reports([_metrics("a", "s1", 0.012)]))
        header, _, row, _ = table.splitlines()
        assert "Warping x10" in header and "LPIPS x10" in header
        cells = row.split()
        assert cells[0] == "a"
        assert cells[1:4] == ["0.1200", "0.0600", "0.5000"]

    def test_report_round_trip(self, tmp_path):
        report = aggregate_reports([_metrics("a", "s1", 0.1), _metrics("b", "s2", 0.2)])
        store = LocalArtifactStore(tmp_path)
        write_report(store, report)
        assert SequenceMetricsReport.model_validate_json(store.path("report.json").read_text()) == report
        assert store.path("report.txt").read_text().startswith("Style")


class TestInjection:
    """Test the injection-point comparison."""

    def test_focus_masks(self):
        depth = torch.ones(16, 16)
        depth[4:12, 4:12] = 0.5
        in_focus, out_of_focus = focus_masks(depth, default_dof_stack().effects[0], margin=1)
        assert bool(in_focus[0, 0]) and not bool(in_focus[8, 8])
        assert bool(out_of_focus[8, 8]) and not bool(out_of_focus[4, 4])

    def test_identity_pass_gives_equal_modes(self):
        report = compare_injection_modes(IdentityPass(), seeds=range(2), height=32, width=32, frame_count=3)
        assert len(report.scenes) == 2
        for scene in report.scenes:
            assert scene.before_post.warping_error == scene.after_post.warping_error
        assert report.before_post_stabler == 2
        assert json.loads(report.model_dump_json())["before_post_stabler"] == 2


class TestPlots:
    """Test that the plots are written."""

    def test_loss_curve(self, tmp_path):
        log = [TrainLogRecord(step=i, epoch=0, content=1.0 / i, style=2.0 / i, depth=0.5, dog=0.1,
                              total=4.0 / i, wall_ms=1.0) for i in range(1, 6)]
        assert plot_loss_curve(log, tmp_path / "loss.png").stat().st_size > 0

    def test_frame_traces(self, tmp_path):
        path = plot_frame_traces({"before": [0.1, 0.2], "after": [0.3, 0.2]}, tmp_path / "traces.png")
        assert path.exists()


@pytest.mark.slow
class TestInjectionAcceptance:
    """Desk-scale comparison with a smoke-trained network."""

    def test_before_post_beats_after_post(self, tmp_path, tiny_encoder, style_image_path, thresholds):
        write_corpus(tmp_path / "photos", 16, seed=12, size=(48, 48))
        dataset = build_mixed_dataset(CorpusSpec(photo_dir=tmp_path / "photos", resize_to=(32, 32)))
        result = train(TrainConfig(batch_size=2, max_steps=200), dataset, (tiny_encoder, ChannelMeanDepth()),
                       read_image(style_image_path), tmp_path / "run")

        limits = thresholds["injection"]
        report = compare_injection_modes(ModelPass(result.model), seeds=range(limits["scenes"]))
        assert report.mean_dof_ratio_before <= limits["max_dof_ratio_before_post"]
        assert report.mean_dof_ratio_after >= limits["min_dof_ratio_after_post"]
        assert report.before_post_stabler >= limits["min_before_post_stabler"]
